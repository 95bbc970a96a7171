"""The searchable database: final hashes plus compressed uncertainty masks.

File layout, all integers little-endian::

    header    48 bytes  magic b"UCBK", u16 version, u16 reserved,
                        u32 d, u32 k_bs, u32 d_u,
                        u64 theta numerator, u64 theta denominator,
                        u64 n, u32 reserved
    hashes    n * d/8   one byte-aligned row per entry, bit 0 = MSB of byte 0
    masks     ceil(n * d_u / 8)
                        ranks as d_u-bit big-endian numbers, packed back to
                        back with no per-entry padding; trailing bits zero
    metadata  per entry: u32 length + UTF-8 clip id,
                         u32 label count, then u32 length + UTF-8 per label
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import BinaryIO, Sequence

import numpy as np

from .bitcore import BitHash, BitMask, WidthMismatch, pack_hashes
from .combinatorics import (
    LIMB_BITS,
    CompressedMask,
    MaskDecoder,
    compressed_width,
    int_to_limbs,
    limb_count,
    limbs_to_int,
    rank_lex,
    ranks_in_range,
)
from .uncertainty import ClipTrace, _unit_fraction, uncertainty_mask

MAGIC = b"UCBK"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIQQQI")


class CodebookFormatError(ValueError):
    pass


class RedundancyLimitError(AssertionError):
    """The compressed masks would take as much space as the hashes themselves."""


@dataclass(frozen=True)
class CodebookHeader:
    d: int
    k_bs: int
    theta: Fraction
    n: int
    d_u: int
    version: int = VERSION

    @property
    def hash_region_bits(self) -> int:
        return self.n * self.d

    @property
    def mask_region_bits(self) -> int:
        return self.n * self.d_u


@dataclass(frozen=True)
class CodebookEntry:
    clip_id: str
    labels: tuple[str, ...]
    hash: BitHash
    mask_rank: CompressedMask


class Codebook:
    """Immutable entry store backed by packed numpy arrays.

    ``hashes`` is ``(n, d / 8)`` uint8 and ``ranks`` is ``(n, limbs)`` uint64
    with the least significant limb first.
    """

    def __init__(self, d, k_bs, theta, hashes, ranks, clip_ids, labels):
        if d <= 0 or d % 8:
            raise ValueError("codebook width must be a positive multiple of 8")
        if not 0 <= k_bs <= d:
            raise ValueError(f"k_bs must lie in [0, {d}]")
        self.d = int(d)
        self.k_bs = int(k_bs)
        self.theta = _unit_fraction(theta, "theta")
        self.d_u = compressed_width(self.d, self.k_bs)
        n_limbs = limb_count(self.d, self.k_bs)
        self.hashes = np.ascontiguousarray(hashes, dtype=np.uint8).reshape(-1, self.d // 8)
        self.ranks = np.ascontiguousarray(ranks, dtype=np.uint64).reshape(-1, n_limbs)
        self.clip_ids = tuple(clip_ids)
        self.labels = tuple(tuple(x) for x in labels)
        n = len(self.hashes)
        if not (len(self.ranks) == len(self.clip_ids) == len(self.labels) == n):
            raise ValueError("entry arrays differ in length")
        if len(set(self.clip_ids)) != n:
            raise ValueError("duplicate clip_id in codebook")
        if not ranks_in_range(self.ranks, self.d, self.k_bs).all():
            raise ValueError("rank out of range")
        self.hashes.setflags(write=False)
        self.ranks.setflags(write=False)
        self._index = {cid: i for i, cid in enumerate(self.clip_ids)}
        self._decoder = None

    @property
    def header(self) -> CodebookHeader:
        return CodebookHeader(self.d, self.k_bs, self.theta, len(self), self.d_u)

    def __len__(self) -> int:
        return len(self.hashes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.header == other.header
            and np.array_equal(self.hashes, other.hashes)
            and np.array_equal(self.ranks, other.ranks)
            and self.clip_ids == other.clip_ids
            and self.labels == other.labels
        )

    def __repr__(self) -> str:
        return f"Codebook(d={self.d}, k_bs={self.k_bs}, theta={self.theta}, n={len(self)})"

    def index_of(self, clip_id: str) -> int | None:
        return self._index.get(clip_id)

    def hash_at(self, i: int) -> BitHash:
        return BitHash.from_bytes(self.hashes[i].tobytes(), self.d)

    def rank_at(self, i: int) -> int:
        return limbs_to_int(self.ranks[i])

    def entry(self, i: int) -> CodebookEntry:
        return CodebookEntry(
            self.clip_ids[i],
            self.labels[i],
            self.hash_at(i),
            CompressedMask(self.d, self.k_bs, self.rank_at(i)),
        )

    def entries(self):
        return (self.entry(i) for i in range(len(self)))

    @property
    def decoder(self) -> MaskDecoder:
        if self._decoder is None:
            self._decoder = MaskDecoder(self.d, self.k_bs)
        return self._decoder

    def decode_masks(self, indices=None) -> np.ndarray:
        """Packed masks ``(m, d / 8)`` for the given entry indices (all by default)."""
        ranks = self.ranks if indices is None else self.ranks[np.asarray(indices, dtype=np.intp)]
        return self.decoder.decode(ranks)

    def redundancy_ok(self) -> bool:
        h = self.header
        if 0 < self.k_bs < self.d and h.n:
            return h.mask_region_bits < h.hash_region_bits
        return True

    # ---------- serialization ----------

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.write(buf)
        return buf.getvalue()

    def write(self, fh: BinaryIO) -> None:
        if not self.redundancy_ok():
            raise RedundancyLimitError(
                f"mask region {self.header.mask_region_bits} bits >= d*n = "
                f"{self.header.hash_region_bits} bits"
            )
        n = len(self)
        fh.write(
            _HEADER.pack(
                MAGIC, VERSION, 0, self.d, self.k_bs, self.d_u,
                self.theta.numerator, self.theta.denominator, n, 0,
            )
        )
        fh.write(self.hashes.tobytes())
        fh.write(pack_ranks(self.ranks, self.d_u))
        for cid, labels in zip(self.clip_ids, self.labels):
            _write_text(fh, cid)
            fh.write(struct.pack("<I", len(labels)))
            for lab in labels:
                _write_text(fh, lab)

    def save(self, destination) -> None:
        if isinstance(destination, (str, os.PathLike)):
            with open(destination, "wb") as fh:
                self.write(fh)
        else:
            self.write(destination)


def _write_text(fh: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def decode_mask(cb: Codebook, i: int) -> BitMask:
    """Restore the uncertainty mask of entry ``i``."""
    return cb.decoder.decode_one(cb.rank_at(i))


# ---------- rank packing ----------


def pack_ranks(ranks: np.ndarray, d_u: int) -> bytes:
    n = len(ranks)
    if d_u == 0 or n == 0:
        return b""
    n_limbs = ranks.shape[1]
    be = np.ascontiguousarray(ranks[:, ::-1]).astype(">u8").view(np.uint8).reshape(n, 8 * n_limbs)
    bits = np.unpackbits(be, axis=1)[:, LIMB_BITS * n_limbs - d_u :]
    return np.packbits(bits.ravel()).tobytes()


def unpack_ranks(data: bytes, n: int, d_u: int, n_limbs: int) -> np.ndarray:
    out = np.zeros((n, n_limbs), dtype=np.uint64)
    if d_u == 0 or n == 0:
        return out
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if bits[n * d_u :].any():
        raise CodebookFormatError("non-zero padding after mask region")
    full = np.zeros((n, LIMB_BITS * n_limbs), dtype=np.uint8)
    full[:, LIMB_BITS * n_limbs - d_u :] = bits[: n * d_u].reshape(n, d_u)
    be = np.packbits(full, axis=1)
    return be.view(">u8").astype(np.uint64)[:, ::-1].copy()


# ---------- loading ----------


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            raise CodebookFormatError(f"truncated payload while reading {what}")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def text(self, what: str) -> str:
        raw = self.take(self.u32(what), what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise CodebookFormatError(f"invalid UTF-8 in {what}") from None


def from_bytes(data: bytes) -> Codebook:
    r = _Reader(data)
    magic, version, _, d, k_bs, d_u, t_num, t_den, n, _ = _HEADER.unpack(
        r.take(_HEADER.size, "header")
    )
    if magic != MAGIC:
        raise CodebookFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CodebookFormatError(f"unsupported codebook version {version}")
    if d == 0 or d % 8 or k_bs > d:
        raise CodebookFormatError(f"invalid shape d={d}, k_bs={k_bs}")
    if d_u != compressed_width(d, k_bs):
        raise CodebookFormatError(
            f"header d_u={d_u} inconsistent with compressed_width({d}, {k_bs})="
            f"{compressed_width(d, k_bs)}"
        )
    if t_den == 0 or t_num > t_den:
        raise CodebookFormatError("theta outside [0, 1]")
    hashes = np.frombuffer(r.take(n * (d // 8), "hash region"), dtype=np.uint8).reshape(n, d // 8)
    ranks = unpack_ranks(r.take(-(-n * d_u // 8), "mask region"), n, d_u, limb_count(d, k_bs))
    if not ranks_in_range(ranks, d, k_bs).all():
        raise CodebookFormatError("rank out of range")
    clip_ids, labels = [], []
    for i in range(n):
        clip_ids.append(r.text(f"clip id {i}"))
        labels.append(tuple(r.text(f"label of entry {i}") for _ in range(r.u32("label count"))))
    if r.pos != len(data):
        raise CodebookFormatError(f"{len(data) - r.pos} trailing bytes after metadata")
    try:
        return Codebook(d, k_bs, Fraction(t_num, t_den), hashes, ranks, clip_ids, labels)
    except ValueError as exc:
        raise CodebookFormatError(str(exc)) from None


def load(source) -> Codebook:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return from_bytes(fh.read())
    return from_bytes(source.read())


# ---------- building ----------


def build(traces: Sequence[ClipTrace], theta, k_bs: int, d: int | None = None) -> Codebook:
    """One entry per trace, in input order: final primary hash plus its ranked mask.

    ``d`` is only needed to give an empty codebook a width.
    """
    theta = _unit_fraction(theta, "theta")
    if traces:
        d = traces[0].width if d is None else d
    if d is None:
        raise ValueError("an empty codebook needs an explicit width")
    if not 0 <= k_bs <= d:
        raise ValueError(f"k_bs must lie in [0, {d}], got {k_bs}")
    seen = set()
    ranks = []
    for tr in traces:
        if tr.width != d:
            raise WidthMismatch(f"clip {tr.clip_id}: width {tr.width} != {d}")
        if tr.clip_id in seen:
            raise ValueError(f"duplicate clip_id {tr.clip_id!r}")
        seen.add(tr.clip_id)
        ranks.append(rank_lex(uncertainty_mask(tr, theta, k_bs), k_bs).value)
    n_limbs = limb_count(d, k_bs)
    rank_arr = np.zeros((len(ranks), n_limbs), dtype=np.uint64)
    for row, value in enumerate(ranks):
        rank_arr[row] = int_to_limbs(value, n_limbs)
    return Codebook(
        d,
        k_bs,
        theta,
        pack_hashes([tr.final_hash for tr in traces], d),
        rank_arr,
        [tr.clip_id for tr in traces],
        [tr.labels for tr in traces],
    )


def random_codebook(n: int, d: int, k_bs: int, seed: int = 0, theta=0) -> Codebook:
    """Uniform random hashes and ranks; for benchmarks and property tests."""
    rng = np.random.default_rng(seed)
    hashes = rng.integers(0, 256, (n, d // 8), dtype=np.uint8)
    n_limbs = limb_count(d, k_bs)
    d_u = compressed_width(d, k_bs)
    ranks = np.zeros((n, n_limbs), dtype=np.uint64)
    todo = np.arange(n)
    while len(todo):
        draw = rng.integers(0, np.iinfo(np.uint64).max, (len(todo), n_limbs), dtype=np.uint64, endpoint=True)
        top_bits = d_u - LIMB_BITS * (n_limbs - 1)
        if top_bits < LIMB_BITS:
            draw[:, -1] &= np.uint64((1 << top_bits) - 1)
        ranks[todo] = draw
        todo = todo[~ranks_in_range(ranks[todo], d, k_bs)]
    return Codebook(
        d, k_bs, theta, hashes, ranks, [f"e{i}" for i in range(n)], [()] * n
    )
