"""Binomial arithmetic and lexicographic ranking of fixed-weight bit masks.

A mask of width ``d`` with exactly ``k`` ones is one of ``C(d, k)``
k-combinations. Ordering the masks as bit strings (index 0 first, ``0 < 1``)
gives each one a rank in ``[0, C(d, k))``, and the rank fits in
``ceil(log2 C(d, k))`` bits, which is strictly fewer than ``d`` for
``0 < k < d``.

Two decode paths exist. :func:`unrank_factoradic` is the exact big-integer
reference. :class:`MaskDecoder` decodes many ranks at once from multi-limb
``uint64`` arrays with a compiled kernel, or from a lookup table when the
table is small enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .bitcore import BitMask

LIMB_BITS = 64
LUT_BUDGET_BITS = 1 << 20
_LIMB_MASK = (1 << LIMB_BITS) - 1


def binomial(d: int, k: int) -> int:
    if not 0 <= k <= d:
        raise ValueError(f"binomial requires 0 <= k <= d, got d={d}, k={k}")
    return math.comb(d, k)


def compressed_width(d: int, k: int) -> int:
    """Bits needed to store a rank: ``ceil(log2(C(d, k)))``, computed exactly."""
    return (binomial(d, k) - 1).bit_length()


@dataclass(frozen=True)
class CombinationRank:
    value: int
    d: int
    k: int

    def __post_init__(self):
        if not 0 <= self.value < binomial(self.d, self.k):
            raise ValueError(
                f"rank out of range: {self.value} not in [0, C({self.d}, {self.k}))"
            )


@dataclass(frozen=True)
class CompressedMask:
    """A mask stored as its rank written in base 2 on exactly ``width`` bits."""

    d: int
    k: int
    rank: int

    def __post_init__(self):
        CombinationRank(self.rank, self.d, self.k)

    @property
    def width(self) -> int:
        return compressed_width(self.d, self.k)

    def bit_string(self) -> str:
        return format(self.rank, f"0{self.width}b") if self.width else ""


# ---------- reference path (exact big integers) ----------


def rank_lex(mask: BitMask, k: int | None = None) -> CombinationRank:
    """Zero-based lexicographic position of ``mask`` among masks of equal weight."""
    d = mask.width
    ones = mask.value.bit_count()
    if k is not None and ones != k:
        raise ValueError(f"mask has {ones} ones, expected {k}")
    k = ones
    rank = 0
    remaining = k
    # c tracks C(n - 1, remaining), n = positions left including the current one
    c = math.comb(d - 1, remaining) if d else 0
    for i in range(d):
        if remaining == 0:
            break
        n = d - i
        if (mask.value >> (n - 1)) & 1:
            rank += c
            if n > 1:
                c = c * remaining // (n - 1)
            remaining -= 1
        elif n > 1:
            c = c * (n - 1 - remaining) // (n - 1)
    return CombinationRank(rank, d, k)


def unrank_factoradic(r: CombinationRank) -> BitMask:
    """Rebuild the mask of rank ``r``; inverse of :func:`rank_lex`.

    Walks the positions once, keeping the running binomial ``C(n - 1, k)``
    updated by one multiply and one exact divide per step, so a decode costs
    ``O(d)`` big-integer operations on ``O(d)``-bit numbers.
    """
    d, remaining, rest = r.d, r.k, r.value
    if not 0 <= rest < binomial(d, remaining):
        raise ValueError("rank out of range")
    value = 0
    c = math.comb(d - 1, remaining) if d else 0
    for i in range(d):
        if remaining == 0:
            break
        n = d - i
        if rest >= c:
            rest -= c
            value |= 1 << (n - 1)
            if n > 1:
                c = c * remaining // (n - 1)
            remaining -= 1
        elif n > 1:
            c = c * (n - 1 - remaining) // (n - 1)
    return BitMask(d, value)


def compress(mask: BitMask, k: int | None = None) -> CompressedMask:
    r = rank_lex(mask, k)
    return CompressedMask(r.d, r.k, r.value)


def decompress(cm: CompressedMask) -> BitMask:
    return unrank_factoradic(CombinationRank(cm.rank, cm.d, cm.k))


# ---------- space analysis ----------


def saving_lower_bound(d: int) -> float:
    """Guaranteed bits saved at ``k = d / 2``: ``0.5 * log2(pi * d / 2)``."""
    if d < 2 or d % 2:
        raise ValueError("d must be even and >= 2")
    return 0.5 * math.log2(math.pi * d / 2)


def saving_margin(d: int, k: int) -> float:
    """``d - log2(C(d, k))`` evaluated from the exact binomial."""
    # math.log2 on an int is correctly scaled for arbitrarily large values
    return d - math.log2(binomial(d, k))


@dataclass(frozen=True)
class LutEstimate:
    bits: int
    feasible: bool


def lut_feasibility(d: int, k: int, budget_bits: int = LUT_BUDGET_BITS) -> LutEstimate:
    """Exact size in bits of a rank -> mask table, ``d * C(d, k)``."""
    bits = d * binomial(d, k)
    return LutEstimate(bits, bits <= budget_bits)


# ---------- multi-limb batch path ----------


def limb_count(d: int, k: int) -> int:
    return max(1, -(-compressed_width(d, k) // LIMB_BITS))


def int_to_limbs(value: int, n_limbs: int) -> np.ndarray:
    if value >> (LIMB_BITS * n_limbs):
        raise ValueError("value does not fit in the requested limbs")
    return np.array(
        [(value >> (LIMB_BITS * i)) & _LIMB_MASK for i in range(n_limbs)], dtype=np.uint64
    )


def limbs_to_int(limbs) -> int:
    return sum(int(x) << (LIMB_BITS * i) for i, x in enumerate(limbs))


def ints_to_limbs(values, n_limbs: int) -> np.ndarray:
    out = np.zeros((len(values), n_limbs), dtype=np.uint64)
    for row, v in enumerate(values):
        out[row] = int_to_limbs(int(v), n_limbs)
    return out


@lru_cache(maxsize=32)
def _binomial_table(d: int, k: int) -> np.ndarray:
    """``table[m, j] = C(m, j)`` as little-endian limbs, for ``m < d``, ``j <= k``."""
    n_limbs = limb_count(d, k)
    table = np.zeros((max(d, 1), k + 1, n_limbs), dtype=np.uint64)
    for m in range(d):
        for j in range(min(m, k) + 1):
            table[m, j] = int_to_limbs(math.comb(m, j), n_limbs)
    table.setflags(write=False)
    return table


@njit(cache=True, nogil=True)
def _unrank_kernel(ranks, table, d, k, out):
    n, n_limbs = ranks.shape
    one = np.uint64(1)
    zero = np.uint64(0)
    r = np.empty(n_limbs, dtype=np.uint64)
    for e in range(n):
        for l in range(n_limbs):
            r[l] = ranks[e, l]
        remaining = k
        for i in range(d):
            if remaining == 0:
                break
            m = d - 1 - i
            ge = True
            for l in range(n_limbs - 1, -1, -1):
                a = r[l]
                b = table[m, remaining, l]
                if a != b:
                    ge = a > b
                    break
            if ge:
                borrow = zero
                for l in range(n_limbs):
                    a = r[l]
                    b = table[m, remaining, l]
                    t = a - b
                    nb = a < b
                    if borrow == one:
                        if t == zero:
                            nb = True
                        t = t - one
                    r[l] = t
                    borrow = one if nb else zero
                out[e, i >> 3] |= np.uint8(0x80 >> (i & 7))
                remaining -= 1


def unrank_batch(ranks: np.ndarray, d: int, k: int) -> np.ndarray:
    """Decode ``(n, limbs)`` rank rows into ``(n, ceil(d / 8))`` packed masks."""
    ranks = np.ascontiguousarray(ranks, dtype=np.uint64)
    if ranks.ndim != 2 or ranks.shape[1] != limb_count(d, k):
        raise ValueError("rank array has the wrong shape")
    out = np.zeros((ranks.shape[0], -(-d // 8)), dtype=np.uint8)
    if ranks.shape[0] and k:
        _unrank_kernel(ranks, _binomial_table(d, k), d, k, out)
    return out


def ranks_in_range(ranks: np.ndarray, d: int, k: int) -> np.ndarray:
    """Boolean per row: rank < C(d, k)."""
    total = binomial(d, k)
    if total >> (LIMB_BITS * ranks.shape[1]):
        return np.ones(ranks.shape[0], dtype=bool)
    bound = int_to_limbs(total, ranks.shape[1])
    below = np.zeros(ranks.shape[0], dtype=bool)
    decided = np.zeros(ranks.shape[0], dtype=bool)
    for l in range(ranks.shape[1] - 1, -1, -1):
        col = ranks[:, l]
        lt = (col < bound[l]) & ~decided
        gt = (col > bound[l]) & ~decided
        below |= lt
        decided |= lt | gt
    return below


class MaskDecoder:
    """Decode compressed masks of one ``(d, k)`` shape.

    Uses a rank-indexed lookup table when :func:`lut_feasibility` fits the
    budget, otherwise the compiled unranking kernel. ``decode_count`` counts
    every mask materialized, whichever tier produced it.
    """

    def __init__(self, d: int, k: int, budget_bits: int = LUT_BUDGET_BITS):
        self.d = d
        self.k = k
        self.n_limbs = limb_count(d, k)
        self.decode_count = 0
        self._lut = None
        if lut_feasibility(d, k, budget_bits).feasible:
            total = binomial(d, k)
            all_ranks = np.zeros((total, self.n_limbs), dtype=np.uint64)
            all_ranks[:, 0] = np.arange(total, dtype=np.uint64)
            self._lut = unrank_batch(all_ranks, d, k)
            self._lut.setflags(write=False)

    @property
    def uses_lut(self) -> bool:
        return self._lut is not None

    def decode(self, ranks: np.ndarray) -> np.ndarray:
        self.decode_count += len(ranks)
        if self._lut is not None:
            return self._lut[ranks[:, 0].astype(np.intp)]
        return unrank_batch(ranks, self.d, self.k)

    def decode_one(self, rank: int) -> BitMask:
        packed = self.decode(int_to_limbs(rank, self.n_limbs)[None, :])[0]
        pad = -self.d % 8
        return BitMask(self.d, int.from_bytes(packed.tobytes(), "big") >> pad)
