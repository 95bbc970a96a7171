import io
import random

import pytest

from ucodebook.bitcore import BitHash
from ucodebook.codebook import build
from ucodebook.evaluation import EvalProtocol, evaluate
from ucodebook.ingest import (
    SynthConfig,
    TraceFormatError,
    parse,
    parse_text,
    render,
    synthesize,
    synthesize_clips,
    write,
)
from ucodebook.query import QueryParams
from ucodebook.uncertainty import primary_uncertainty, secondary_uncertainty, uncertainty_mask

SMALL = SynthConfig(class_count=3, clips_per_class=5, queries_per_class=2, d=32, T=6,
                    centroid_distance=8, unstable_bit_count=4, seed=3)

HEADER = "HASHTRACE v1 d=8\n"


def test_round_trip(tmp_path):
    db, queries = synthesize(SMALL)
    text = render(db + queries)
    assert render(parse_text(text)) == text
    path = tmp_path / "t.trace"
    write(path, db)
    assert parse(path) == db


def test_round_trip_normalizes_whitespace():
    text = HEADER + "a\tx; y\t2\tAB  0f\tab 0f\n\n"
    tr = parse_text(text)[0]
    assert tr.labels == ("x", "y")
    assert tr.primary_hashes == (BitHash(8, 0xAB), BitHash(8, 0x0F))
    assert render(parse_text(render([tr]))) == render([tr])


def test_empty_labels_allowed():
    tr = parse_text(HEADER + "a\t\t1\t00\t00\n")[0]
    assert tr.labels == ()


def test_empty_file_with_header():
    assert parse_text(HEADER) == []
    with pytest.raises(TraceFormatError):
        parse_text("")


@pytest.mark.parametrize(
    "record,fragment",
    [
        ("a\tx\t1\t000\t00", "hex digits"),
        ("a\tx\t1\tzz\t00", "malformed hex"),
        ("a\tx\t2\t00\t00 00", "T=2"),
        ("a\tx\t1\t00", "5 tab-separated"),
        ("a\tx\tone\t00\t00", "timestep count"),
    ],
)
def test_record_errors_name_the_line(record, fragment):
    text = HEADER + "ok\tx\t1\t00\t00\n" + record + "\n"
    with pytest.raises(TraceFormatError, match=fragment) as err:
        parse_text(text)
    assert err.value.line == 3
    assert str(err.value).startswith("line 3:")


def test_duplicate_clip_id():
    with pytest.raises(TraceFormatError, match="duplicate") as err:
        parse_text(HEADER + "a\tx\t1\t00\t00\n\na\tx\t1\t00\t00\n")
    assert err.value.line == 4


def test_bad_header():
    with pytest.raises(TraceFormatError, match="line 1"):
        parse_text("HASHTRACE v2 d=8\n")
    with pytest.raises(TraceFormatError):
        parse_text("TRACES d=8\n")


def test_streaming_reader_yields_before_error():
    from ucodebook.ingest import iter_traces

    it = iter_traces(io.StringIO(HEADER + "a\tx\t1\t00\t00\nbroken\n"))
    assert next(it).clip_id == "a"
    with pytest.raises(TraceFormatError):
        next(it)


def test_seeded_determinism():
    assert render(sum(synthesize(SMALL), [])) == render(sum(synthesize(SMALL), []))
    other = SynthConfig(**{**SMALL.to_dict(), "seed": 4})
    assert render(sum(synthesize(other), [])) != render(sum(synthesize(SMALL), []))


def test_split_is_disjoint_and_labeled():
    db, queries = synthesize(SMALL)
    assert len(db) == 15 and len(queries) == 6
    assert not {t.clip_id for t in db} & {t.clip_id for t in queries}
    assert all(len(t.labels) == 1 for t in db + queries)


def test_zero_rates_give_constant_traces():
    cfg = SynthConfig(**{**SMALL.to_dict(), "instability_rate": 0, "secondary_lag": 0})
    for tr in sum(synthesize(cfg), []):
        assert set(tr.primary_hashes) == {tr.final_hash}
        assert set(tr.secondary_hashes) == {tr.final_hash}
        assert not any(primary_uncertainty(tr)) and not any(secondary_uncertainty(tr))


def test_no_unstable_bits_reduces_to_plain():
    cfg = SynthConfig(**{**SMALL.to_dict(), "unstable_bit_count": 0})
    db, queries = synthesize(cfg)
    cb = build(db, 0.5, cfg.unstable_bit_count)
    protocol = EvalProtocol(queries, cb, ks=(1, 5))
    plain = evaluate(protocol, QueryParams(0), plain=True)
    for gamma in (0.25, 1):
        rep = evaluate(protocol, QueryParams(gamma))
        assert [o.ranking for o in rep.outcomes] == [o.ranking for o in plain.outcomes]


def test_default_config_recovers_planted_bits():
    db, queries = synthesize_clips(SynthConfig())
    for clip in db + queries:
        mask = uncertainty_mask(clip.trace, 0.5, len(clip.unstable))
        hit = len(set(mask.positions()) & set(clip.unstable))
        assert hit >= 0.9 * len(clip.unstable)


def test_recovery_beats_random_subset():
    cfg = SynthConfig(class_count=2, clips_per_class=30, queries_per_class=0, d=64, T=16,
                      centroid_distance=10, unstable_bit_count=8, instability_rate=0.4,
                      secondary_lag=0.4, seed=11)
    db, _ = synthesize_clips(cfg)
    rng = random.Random(0)
    found = chance = 0
    for clip in db:
        planted = set(clip.unstable)
        found += len(set(uncertainty_mask(clip.trace, 0.5, 8).positions()) & planted)
        chance += len(set(rng.sample(range(64), 8)) & planted)
    # random subsets overlap by 8 * 8 / 64 = 1 bit per clip on average
    assert found > chance + 3 * len(db)


def test_invalid_config():
    with pytest.raises(ValueError):
        SynthConfig(clip_noise=1.5)
    with pytest.raises(ValueError):
        SynthConfig(unstable_bit_count=200)
    with pytest.raises(ValueError):
        SynthConfig(d=100)
