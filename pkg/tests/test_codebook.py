import io
import random
import struct

import numpy as np
import pytest

from ucodebook.bitcore import BitHash, BitMask
from ucodebook.codebook import (
    Codebook,
    CodebookFormatError,
    RedundancyLimitError,
    build,
    decode_mask,
    from_bytes,
    load,
    pack_ranks,
    random_codebook,
)
from ucodebook.combinatorics import binomial, compressed_width, int_to_limbs, rank_lex
from ucodebook.ingest import SynthConfig, synthesize
from ucodebook.uncertainty import ClipTrace, uncertainty_mask

HEADER_SIZE = 48


def constant_trace(cid, d=16, T=3, value=0x1234):
    h = BitHash(d, value)
    return ClipTrace(cid, ("a",), (h,) * T, (h,) * T)


@pytest.fixture(scope="module")
def synth():
    cfg = SynthConfig(class_count=4, clips_per_class=10, queries_per_class=2, d=64, T=8,
                      centroid_distance=12, unstable_bit_count=8, seed=2)
    return synthesize(cfg)


def test_empty_build():
    cb = build([], 0.5, 4, d=32)
    assert len(cb) == 0 and cb.d_u == compressed_width(32, 4)
    assert from_bytes(cb.to_bytes()) == cb
    with pytest.raises(ValueError):
        build([], 0.5, 4)


def test_constant_trace_flags_lowest_positions():
    cb = build([constant_trace("a")], 0.5, 2)
    # every score ties, so bits 0 and 1 win; "1100..." is the last string in lexicographic order
    assert decode_mask(cb, 0) == BitMask.from_positions(16, [0, 1])
    assert cb.rank_at(0) == binomial(16, 2) - 1


def test_entry_fields(synth):
    db, _ = synth
    cb = build(db, 0.25, 8)
    e = cb.entry(3)
    assert e.clip_id == db[3].clip_id
    assert e.labels == db[3].labels
    assert e.hash == db[3].final_hash
    assert cb.index_of(db[3].clip_id) == 3
    assert cb.index_of("nope") is None


def test_decode_matches_extracted_masks(synth):
    db, _ = synth
    for theta, k_bs in [(0, 8), (0.5, 3), (1, 32)]:
        cb = build(db, theta, k_bs)
        for i, tr in enumerate(db):
            m = uncertainty_mask(tr, theta, k_bs)
            assert decode_mask(cb, i) == m
            assert cb.rank_at(i) == rank_lex(m, k_bs).value


def test_masks_depend_only_on_own_trace(synth):
    db, _ = synth
    forward = build(db, 0.5, 8)
    backward = build(db[::-1], 0.5, 8)
    n = len(db)
    assert [forward.rank_at(i) for i in range(n)] == [backward.rank_at(n - 1 - i) for i in range(n)]


def test_k_bs_zero_gives_empty_masks(synth):
    cb = build(synth[0], 0.5, 0)
    assert cb.d_u == 0
    assert not cb.decode_masks().any()
    assert from_bytes(cb.to_bytes()) == cb


@pytest.mark.parametrize("d", [8, 96, 128, 192, 256, 1024])
def test_random_round_trip(d, tmp_path):
    cb = random_codebook(100, d, d // 3, seed=d)
    path = tmp_path / "cb.ucb"
    cb.save(path)
    back = load(path)
    assert back == cb
    assert back.header == cb.header
    assert back.clip_ids == cb.clip_ids


def test_round_trip_keeps_labels_and_theta(synth):
    cb = build(synth[0], 0.75, 8)
    back = from_bytes(cb.to_bytes())
    assert back.labels == cb.labels
    assert back.theta == cb.theta


def test_random_masks_at_256_decode_exactly():
    rng = random.Random(1)
    masks = [BitMask.from_positions(256, rng.sample(range(256), 128)) for _ in range(50)]
    ranks = np.stack([int_to_limbs(rank_lex(m).value, 4) for m in masks])
    cb = Codebook(256, 128, 0, np.zeros((50, 32), np.uint8), ranks, [str(i) for i in range(50)], [()] * 50)
    back = from_bytes(cb.to_bytes())
    assert [decode_mask(back, i) for i in range(50)] == masks


def test_build_determinism(synth):
    assert build(synth[0], 0.5, 8).to_bytes() == build(synth[0], 0.5, 8).to_bytes()


def test_file_layout(synth):
    db, _ = synth
    cb = build(db, 0.5, 8)
    data = cb.to_bytes()
    assert data[:4] == b"UCBK"
    n = len(db)
    hash_region = data[HEADER_SIZE:HEADER_SIZE + n * 8]
    assert hash_region == cb.hashes.tobytes()
    mask_bytes = -(-n * cb.d_u // 8)
    assert data[HEADER_SIZE + n * 8:HEADER_SIZE + n * 8 + mask_bytes] == pack_ranks(cb.ranks, cb.d_u)


def test_pack_ranks_is_contiguous():
    ranks = np.array([[5], [2], [7]], dtype=np.uint64)
    # 3-bit fields 101 010 111, then zero padding
    assert pack_ranks(ranks, 3) == bytes([0b10101011, 0b10000000])


def _patched(data, offset, fmt, value):
    data = bytearray(data)
    struct.pack_into(fmt, data, offset, value)
    return bytes(data)


def test_load_errors():
    cb = random_codebook(10, 16, 2, seed=0)
    good = cb.to_bytes()
    with pytest.raises(CodebookFormatError, match="magic"):
        from_bytes(b"XXXX" + good[4:])
    with pytest.raises(CodebookFormatError, match="version"):
        from_bytes(_patched(good, 4, "<H", 9))
    with pytest.raises(CodebookFormatError, match="d_u"):
        from_bytes(_patched(good, 16, "<I", cb.d_u + 1))
    with pytest.raises(CodebookFormatError, match="truncated|short|end"):
        from_bytes(good[:-3])
    with pytest.raises(CodebookFormatError):
        from_bytes(good[:20])
    with pytest.raises(CodebookFormatError, match="trailing"):
        from_bytes(good + b"\0")


def test_rank_out_of_range_on_load():
    cb = random_codebook(3, 16, 2, seed=0)
    data = bytearray(cb.to_bytes())
    # C(16, 2) = 120 fits in d_u = 7 bits; 127 is an unused code
    assert cb.d_u == 7 and binomial(16, 2) == 120
    start = HEADER_SIZE + 3 * 2
    data[start] |= 0b11111110
    with pytest.raises(CodebookFormatError, match="rank out of range"):
        from_bytes(bytes(data))


def test_redundancy_limit(synth):
    cb = build(synth[0], 0.5, 8)
    h = cb.header
    assert h.mask_region_bits < h.hash_region_bits
    assert cb.redundancy_ok()


def test_redundancy_violation_is_refused(monkeypatch):
    cb = random_codebook(4, 16, 8, seed=0)
    monkeypatch.setattr(Codebook, "redundancy_ok", lambda self: False)
    with pytest.raises(RedundancyLimitError):
        cb.save(io.BytesIO())


def test_duplicate_and_width_errors():
    with pytest.raises(ValueError, match="duplicate"):
        build([constant_trace("a"), constant_trace("a")], 0, 1)
    with pytest.raises(ValueError):
        build([constant_trace("a"), constant_trace("b", d=24)], 0, 1)
    with pytest.raises(ValueError):
        build([constant_trace("a")], 0, 17)


@pytest.mark.slow
def test_large_build_meets_redundancy_limit():
    cfg = SynthConfig(class_count=7, clips_per_class=237, queries_per_class=0, d=128, T=12, seed=5)
    db, _ = synthesize(cfg)
    assert len(db) == 1659
    cb = build(db, 0.5, 64)
    assert cb.header.mask_region_bits == 1659 * 125
    assert cb.header.mask_region_bits < cb.header.hash_region_bits
    assert load(io.BytesIO(cb.to_bytes())) == cb
