from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucodebook.bitcore import BitHash
from ucodebook.uncertainty import (
    ClipTrace,
    blend,
    primary_uncertainty,
    scores,
    secondary_uncertainty,
    top_k_mask,
    uncertainty_mask,
)


def h(text):
    return BitHash.from_bits(int(c) for c in text)


def trace(prim, sec, cid="x"):
    return ClipTrace(cid, ("a",), tuple(h(p) for p in prim), tuple(h(s) for s in sec))


def test_constant_trace_scores_zero():
    tr = trace(["1010"] * 5, ["1010"] * 5)
    assert primary_uncertainty(tr) == [0] * 4
    assert secondary_uncertainty(tr) == [0] * 4


def test_full_disagreement():
    tr = trace(["0111", "0111", "1111"], ["0000", "0000", "0000"])
    assert primary_uncertainty(tr)[0] == 1
    assert secondary_uncertainty(tr) == [1, 1, 1, 1]


def test_hand_counted_examples():
    # bit 0 vs final: agree, disagree, agree
    tr = trace(["0", "1", "0", "0"], ["0", "1", "0", "0"])
    assert primary_uncertainty(tr) == [Fraction(1, 3)]
    assert secondary_uncertainty(tr) == [Fraction(1, 4)]


def test_blend_examples():
    p = [Fraction(1, 2), Fraction(1)]
    s = [Fraction(1, 4), Fraction(0)]
    assert blend(p, s, 1) == p
    assert blend(p, s, 0) == s
    assert blend(p, s, 0.25)[0] == Fraction(5, 16)
    with pytest.raises(ValueError):
        blend(p, s, 1.5)


def test_top_k_mask_examples():
    mu = [Fraction(1, 10), Fraction(9, 10), Fraction(9, 10), Fraction(0)]
    assert str(top_k_mask(mu, 2)) == "0110"
    assert str(top_k_mask(mu, 0)) == "0000"
    assert str(top_k_mask(mu, 4)) == "1111"
    with pytest.raises(ValueError):
        top_k_mask(mu, 5)


def test_ties_go_to_lower_index():
    assert str(top_k_mask([0, 0, 0, 0, 0], 2)) == "11000"
    assert str(top_k_mask([1, 0, 1, 0, 1], 2)) == "10100"


def test_single_timestep():
    tr = trace(["1100"], ["1000"])
    assert primary_uncertainty(tr) == [0] * 4
    assert secondary_uncertainty(tr) == [0, 1, 0, 0]
    assert str(uncertainty_mask(tr, 0.5, 1)) == "0100"


def test_trace_validation():
    with pytest.raises(ValueError):
        trace(["10", "10"], ["10"])
    with pytest.raises(ValueError):
        trace(["10", "100"], ["10", "10"])


@st.composite
def traces(draw):
    d = draw(st.integers(1, 8))
    T = draw(st.integers(1, 6))
    word = st.integers(0, (1 << d) - 1)
    prim = tuple(BitHash(d, draw(word)) for _ in range(T))
    sec = tuple(BitHash(d, draw(word)) for _ in range(T))
    return ClipTrace("c", (), prim, sec)


def naive_scores(tr):
    d, T = tr.width, tr.T
    final = tr.final_hash
    p, s = [], []
    for i in range(d):
        dis_p = sum(tr.primary_hashes[t].bit(i) != final.bit(i) for t in range(T - 1))
        dis_s = sum(tr.secondary_hashes[t].bit(i) != final.bit(i) for t in range(T))
        p.append(Fraction(dis_p, T - 1) if T > 1 else Fraction(0))
        s.append(Fraction(dis_s, T))
    return p, s


@settings(max_examples=300, deadline=None)
@given(traces(), st.sampled_from([0, Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), 1]))
def test_matches_naive_loop(tr, theta):
    p, s = naive_scores(tr)
    assert primary_uncertainty(tr) == p
    assert secondary_uncertainty(tr) == s
    sc = scores(tr, theta)
    mu = [theta * pi + (1 - theta) * si for pi, si in zip(p, s)]
    assert sc.mu == mu
    assert all(0 <= x <= 1 for x in p + s + mu)
    for k in range(tr.width + 1):
        m = uncertainty_mask(tr, theta, k)
        assert m.ones_count == k
        assert m == top_k_mask(mu, k)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.fractions(0, 1), min_size=1, max_size=20), st.data())
def test_scaling_invariance(mu, data):
    k = data.draw(st.integers(0, len(mu)))
    c = data.draw(st.fractions(Fraction(1, 100), 100))
    assert top_k_mask(mu, k) == top_k_mask([c * x for x in mu], k)
    assert top_k_mask(mu, k).ones_count == k
