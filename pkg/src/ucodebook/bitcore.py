"""Fixed-width binary hashes and the bit primitives built on them.

Bit index 0 is the most significant bit of the first byte. A hash of width
``d`` is held as a Python ``int`` whose bit ``d - 1 - i`` is hash bit ``i``,
so ``value.to_bytes(d // 8, "big")`` is the on-disk layout and the hex form
reads left to right in bit order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_WIDTH = 1024
COMMON_WIDTHS = (96, 128, 192, 256)


class WidthMismatch(ValueError):
    """Raised when two bit arrays of different widths are combined."""


def _check_width(width: int) -> None:
    if not isinstance(width, (int, np.integer)) or not 1 <= width <= MAX_WIDTH:
        raise ValueError(f"width must be an integer in [1, {MAX_WIDTH}], got {width!r}")


@dataclass(frozen=True)
class BitHash:
    width: int
    value: int

    def __post_init__(self):
        _check_width(self.width)
        if self.value < 0 or self.value >> self.width:
            raise ValueError(f"value does not fit in {self.width} bits")

    @classmethod
    def zeros(cls, width: int):
        return cls(width, 0)

    @classmethod
    def ones(cls, width: int):
        return cls(width, (1 << width) - 1)

    @classmethod
    def from_bits(cls, bits: Iterable[int]):
        bits = list(bits)
        value = 0
        for b in bits:
            value = (value << 1) | (1 if b else 0)
        return cls(len(bits), value)

    @classmethod
    def from_positions(cls, width: int, positions: Iterable[int]):
        value = 0
        for i in positions:
            if not 0 <= i < width:
                raise IndexError(f"bit position {i} outside width {width}")
            value |= 1 << (width - 1 - i)
        return cls(width, value)

    @classmethod
    def from_hex(cls, text: str, width: int):
        """Parse the lowercase, zero-padded hex form produced by :meth:`hex`."""
        if width % 4:
            raise ValueError("hex form requires a width divisible by 4")
        text = text.strip()
        if len(text) != width // 4:
            raise ValueError(f"expected {width // 4} hex digits, got {len(text)}")
        try:
            value = int(text, 16)
        except ValueError:
            raise ValueError(f"malformed hex string {text!r}") from None
        return cls(width, value)

    @classmethod
    def from_bytes(cls, data: bytes, width: int | None = None):
        width = 8 * len(data) if width is None else width
        if width % 8 or len(data) != width // 8:
            raise ValueError("byte length does not match width")
        return cls(width, int.from_bytes(bytes(data), "big"))

    def hex(self) -> str:
        if self.width % 4:
            raise ValueError("hex form requires a width divisible by 4")
        return format(self.value, f"0{self.width // 4}x")

    def to_bytes(self) -> bytes:
        if self.width % 8:
            raise ValueError("byte form requires a width divisible by 8")
        return self.value.to_bytes(self.width // 8, "big")

    def bit(self, i: int) -> int:
        if not 0 <= i < self.width:
            raise IndexError(i)
        return (self.value >> (self.width - 1 - i)) & 1

    def bits(self) -> np.ndarray:
        """Unpacked bits as a uint8 array, index 0 first."""
        pad = -self.width % 8
        raw = (self.value << pad).to_bytes((self.width + pad) // 8, "big")
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[: self.width]

    def positions(self) -> list[int]:
        return [i for i in range(self.width) if self.bit(i)]

    def complement(self):
        return type(self)(self.width, self.value ^ ((1 << self.width) - 1))

    def __str__(self) -> str:
        return format(self.value, f"0{self.width}b")


@dataclass(frozen=True)
class BitMask(BitHash):
    """A bit array used as a selection pattern over hash positions."""

    @property
    def ones_count(self) -> int:
        return self.value.bit_count()


def _same_width(a: BitHash, b: BitHash) -> None:
    if a.width != b.width:
        raise WidthMismatch(f"width mismatch: {a.width} vs {b.width}")


def xor(a: BitHash, b: BitHash) -> BitHash:
    _same_width(a, b)
    return BitHash(a.width, a.value ^ b.value)


def popcount(a: BitHash) -> int:
    return a.value.bit_count()


def masked_popcount(a: BitHash, m: BitHash) -> int:
    """Number of positions set in both ``a`` and ``m``."""
    _same_width(a, m)
    return (a.value & m.value).bit_count()


def hamming(a: BitHash, b: BitHash) -> int:
    return popcount(xor(a, b))


# ---------- packed numpy views ----------


def pack_hashes(hashes: Sequence[BitHash], width: int) -> np.ndarray:
    """Stack hashes into an ``(n, width // 8)`` uint8 array in storage order."""
    if width % 8:
        raise ValueError("packed arrays require a width divisible by 8")
    nbytes = width // 8
    out = np.zeros((len(hashes), nbytes), dtype=np.uint8)
    for row, h in enumerate(hashes):
        if h.width != width:
            raise WidthMismatch(f"width mismatch: {h.width} vs {width}")
        out[row] = np.frombuffer(h.to_bytes(), dtype=np.uint8)
    return out


def bit_matrix(hashes: Sequence[BitHash]) -> np.ndarray:
    """``(n, d)`` uint8 matrix of unpacked bits."""
    if not hashes:
        return np.zeros((0, 0), dtype=np.uint8)
    width = hashes[0].width
    for h in hashes:
        _same_width(hashes[0], h)
    return np.stack([h.bits() for h in hashes]) if width else np.zeros((len(hashes), 0), np.uint8)


def word_view(packed: np.ndarray) -> np.ndarray:
    """Reinterpret packed rows with the widest unsigned word dividing the row.

    Popcounts of XORs do not depend on byte order, so the wider view is only
    used for counting, never for addressing individual bits.
    """
    packed = np.ascontiguousarray(packed)
    nbytes = packed.shape[-1]
    for size, dtype in ((8, np.uint64), (4, np.uint32), (2, np.uint16)):
        if nbytes % size == 0 and nbytes:
            return packed.view(dtype)
    return packed


def _row_popcounts(words: np.ndarray) -> np.ndarray:
    # column-wise accumulation is much faster than sum(axis=1) over a short axis
    out = np.bitwise_count(words[:, 0]).astype(np.int32)
    for w in range(1, words.shape[1]):
        out += np.bitwise_count(words[:, w])
    return out


def hamming_many(query: np.ndarray, packed: np.ndarray) -> np.ndarray:
    """Raw Hamming distances (int32) from one packed query row to every packed row."""
    q = word_view(query.reshape(1, -1))[0]
    rows = word_view(packed)
    if not rows.shape[1]:
        return np.zeros(len(rows), dtype=np.int32)
    out = np.bitwise_count(rows[:, 0] ^ q[0]).astype(np.int32)
    for w in range(1, rows.shape[1]):
        out += np.bitwise_count(rows[:, w] ^ q[w])
    return out


def masked_hamming_many(query: np.ndarray, packed: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Per-row count of conflicting bits that fall inside the row's mask."""
    q = word_view(query.reshape(1, -1))
    return _row_popcounts((word_view(packed) ^ q) & word_view(masks))
