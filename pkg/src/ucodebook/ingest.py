"""Hash-trace files and a seeded generator of labeled synthetic traces.

Trace file layout (UTF-8 text, one record per line)::

    HASHTRACE v1 d=<width>
    <clip_id>\\t<label;label;...>\\t<T>\\t<P_1 ... P_T>\\t<S_1 ... S_T>

``P_t``/``S_t`` are the primary/secondary hashes as lowercase hex, zero
padded to ``width / 4`` digits and separated by single spaces. The label
field may be empty. Blank lines are ignored. Clip ids may not contain tabs
or whitespace.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import asdict, dataclass
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .bitcore import BitHash
from .uncertainty import ClipTrace

MAGIC = "HASHTRACE"
VERSION = 1


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _open_lines(source) -> tuple[Iterable[str], IO | None]:
    if isinstance(source, (str, os.PathLike)):
        fh = open(source, encoding="utf-8")
        return fh, fh
    return source, None


def parse_header(line: str) -> int:
    parts = line.split()
    if len(parts) != 3 or parts[0] != MAGIC or not parts[2].startswith("d="):
        raise TraceFormatError("expected header 'HASHTRACE v1 d=<width>'", 1)
    if parts[1] != f"v{VERSION}":
        raise TraceFormatError(f"unsupported trace version {parts[1]!r}", 1)
    try:
        d = int(parts[2][2:])
    except ValueError:
        raise TraceFormatError(f"bad width {parts[2]!r}", 1) from None
    if d <= 0 or d % 4:
        raise TraceFormatError("width must be a positive multiple of 4", 1)
    return d


def iter_traces(source) -> Iterator[ClipTrace]:
    """Yield traces one record at a time from a path, file object or lines."""
    lines, owned = _open_lines(source)
    try:
        it = iter(lines)
        header = next(it, None)
        if header is None:
            raise TraceFormatError("empty trace file", 1)
        d = parse_header(header)
        seen: set[str] = set()
        for lineno, raw in enumerate(it, start=2):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            trace = _parse_record(line, d, lineno)
            if trace.clip_id in seen:
                raise TraceFormatError(f"duplicate clip_id {trace.clip_id!r}", lineno)
            seen.add(trace.clip_id)
            yield trace
    finally:
        if owned is not None:
            owned.close()


def _parse_record(line: str, d: int, lineno: int) -> ClipTrace:
    fields = line.split("\t")
    if len(fields) != 5:
        raise TraceFormatError(f"expected 5 tab-separated fields, got {len(fields)}", lineno)
    clip_id, labels, t_field, prim, sec = fields
    clip_id = clip_id.strip()
    if not clip_id or any(c.isspace() for c in clip_id):
        raise TraceFormatError("clip_id must be non-empty without whitespace", lineno)
    try:
        T = int(t_field)
    except ValueError:
        raise TraceFormatError(f"bad timestep count {t_field!r}", lineno) from None
    if T < 1:
        raise TraceFormatError("timestep count must be >= 1", lineno)
    prim_hex, sec_hex = prim.split(), sec.split()
    if len(prim_hex) != T or len(sec_hex) != T:
        raise TraceFormatError(
            f"T={T} but got {len(prim_hex)} primary and {len(sec_hex)} secondary hashes", lineno
        )

    def _hash(text: str) -> BitHash:
        if len(text) != d // 4:
            raise TraceFormatError(
                f"hash {text!r} has {len(text)} hex digits, expected {d // 4}", lineno
            )
        try:
            return BitHash.from_hex(text.lower(), d)
        except ValueError as exc:
            raise TraceFormatError(str(exc), lineno) from None

    label_set = tuple(x for x in (s.strip() for s in labels.split(";")) if x)
    return ClipTrace(
        clip_id, label_set, tuple(map(_hash, prim_hex)), tuple(map(_hash, sec_hex))
    )


def parse(source) -> list[ClipTrace]:
    return list(iter_traces(source))


def parse_text(text: str) -> list[ClipTrace]:
    return parse(io.StringIO(text))


def render_record(trace: ClipTrace) -> str:
    return "\t".join(
        [
            trace.clip_id,
            ";".join(trace.labels),
            str(trace.T),
            " ".join(h.hex() for h in trace.primary_hashes),
            " ".join(h.hex() for h in trace.secondary_hashes),
        ]
    )


def render(traces: Sequence[ClipTrace], d: int | None = None) -> str:
    if d is None:
        if not traces:
            raise ValueError("width is required to render an empty trace set")
        d = traces[0].width
    lines = [f"{MAGIC} v{VERSION} d={d}"]
    for tr in traces:
        if tr.width != d:
            raise ValueError(f"clip {tr.clip_id} has width {tr.width}, expected {d}")
        lines.append(render_record(tr))
    return "\n".join(lines) + "\n"


def write(path, traces: Sequence[ClipTrace], d: int | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render(traces, d))


# ---------- synthetic traces ----------


@dataclass(frozen=True)
class SynthConfig:
    class_count: int = 10
    clips_per_class: int = 40
    queries_per_class: int = 10
    d: int = 128
    T: int = 24
    centroid_distance: float = 24.0
    clip_noise: float = 0.2
    unstable_bit_count: int = 16
    instability_rate: float = 0.5
    secondary_lag: float = 0.4
    seed: int = 0

    def __post_init__(self):
        for name in ("clip_noise", "instability_rate", "secondary_lag"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.d <= 0 or self.d % 8:
            raise ValueError("d must be a positive multiple of 8")
        if not 0 <= self.unstable_bit_count <= self.d:
            raise ValueError("unstable_bit_count must lie in [0, d]")
        if not 0 <= self.centroid_distance <= self.d / 2:
            raise ValueError("centroid_distance must lie in [0, d / 2]")
        if self.T < 1 or self.class_count < 1:
            raise ValueError("T and class_count must be >= 1")
        if self.clips_per_class < 0 or self.queries_per_class < 0:
            raise ValueError("clip counts must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SynthClip:
    trace: ClipTrace
    unstable: tuple[int, ...]


def centroid_flip_probability(d: int, distance: float) -> float:
    """Per-bit flip rate from a shared base so centroids sit ``distance`` apart on average."""
    return (1 - math.sqrt(max(0.0, 1 - 2 * distance / d))) / 2


def synthesize_clips(cfg: SynthConfig) -> tuple[list[SynthClip], list[SynthClip]]:
    """Database and query clips together with their planted unstable positions.

    Randomness comes from ``numpy.random.Generator(PCG64(SeedSequence(seed)))``
    and is drawn in this fixed order:

    1. ``base``: ``integers(0, 2, d)``.
    2. Per class: ``random(d) < q`` flips of ``base`` give the centroid, where
       ``q`` solves ``2 q (1 - q) d = centroid_distance``.
    3. Per class, per clip (database clips first, then queries):
       ``choice(d, U, replace=False)`` unstable positions;
       ``random(d) < clip_noise`` flips of the centroid; ``integers(0, 2, U)``
       overwriting the unstable positions of the final hash;
       ``random((T - 1, U)) < instability_rate`` primary flips;
       ``random((T, U)) < secondary_lag`` secondary flips.

    Flips only ever touch the clip's unstable positions, so stable bits of
    every trace equal the final hash at every timestep.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    d, T, U = cfg.d, cfg.T, cfg.unstable_bit_count
    base = rng.integers(0, 2, d, dtype=np.uint8)
    q = centroid_flip_probability(d, cfg.centroid_distance)
    centroids = [base ^ (rng.random(d) < q).astype(np.uint8) for _ in range(cfg.class_count)]

    db: list[SynthClip] = []
    queries: list[SynthClip] = []
    for c, centroid in enumerate(centroids):
        for j in range(cfg.clips_per_class + cfg.queries_per_class):
            unstable = np.sort(rng.choice(d, U, replace=False))
            final = centroid ^ (rng.random(d) < cfg.clip_noise).astype(np.uint8)
            final[unstable] = rng.integers(0, 2, U, dtype=np.uint8)
            prim = np.repeat(final[None, :], T, axis=0)
            prim[: T - 1, unstable] ^= (rng.random((T - 1, U)) < cfg.instability_rate).astype(np.uint8)
            sec = np.repeat(final[None, :], T, axis=0)
            sec[:, unstable] ^= (rng.random((T, U)) < cfg.secondary_lag).astype(np.uint8)

            is_db = j < cfg.clips_per_class
            clip_id = f"c{c:03d}-{'db' if is_db else 'q'}{j if is_db else j - cfg.clips_per_class:04d}"
            trace = ClipTrace(
                clip_id,
                (f"class{c}",),
                tuple(_row_hash(r) for r in prim),
                tuple(_row_hash(r) for r in sec),
            )
            (db if is_db else queries).append(SynthClip(trace, tuple(int(i) for i in unstable)))
    return db, queries


def _row_hash(bits: np.ndarray) -> BitHash:
    return BitHash(len(bits), int.from_bytes(np.packbits(bits).tobytes(), "big"))


def synthesize(cfg: SynthConfig) -> tuple[list[ClipTrace], list[ClipTrace]]:
    db, queries = synthesize_clips(cfg)
    return [c.trace for c in db], [c.trace for c in queries]
