"""Per-bit uncertainty of a stored hash, measured from its encoder traces.

Every score is a disagreement frequency against the final primary hash,
the one that goes into the codebook. Scores are kept as integer counts so
that blending and top-k selection compare exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from .bitcore import BitHash, BitMask, WidthMismatch, bit_matrix


def as_fraction(x) -> Fraction:
    """Exact rational for a user-supplied factor; floats go through their repr."""
    if isinstance(x, Rational):
        return Fraction(x)
    return Fraction(repr(float(x)))


def _unit_fraction(x, name: str) -> Fraction:
    f = as_fraction(x)
    if not 0 <= f <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")
    return f


@dataclass(frozen=True)
class ClipTrace:
    clip_id: str
    labels: tuple[str, ...]
    primary_hashes: tuple[BitHash, ...]
    secondary_hashes: tuple[BitHash, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "primary_hashes", tuple(self.primary_hashes))
        object.__setattr__(self, "secondary_hashes", tuple(self.secondary_hashes))
        if not self.primary_hashes:
            raise ValueError("a trace needs at least one timestep")
        if len(self.primary_hashes) != len(self.secondary_hashes):
            raise ValueError("primary and secondary traces differ in length")
        d = self.primary_hashes[0].width
        for h in self.primary_hashes + self.secondary_hashes:
            if h.width != d:
                raise WidthMismatch(f"clip {self.clip_id}: width {h.width} != {d}")

    @property
    def T(self) -> int:
        return len(self.primary_hashes)

    @property
    def width(self) -> int:
        return self.primary_hashes[0].width

    @property
    def final_hash(self) -> BitHash:
        return self.primary_hashes[-1]


@dataclass(frozen=True)
class UncertaintyScores:
    """Disagreement counts for one trace, with exact rational views.

    ``p = p_count / (T - 1)``, ``s = s_count / T`` and
    ``mu = theta * p + (1 - theta) * s``.
    """

    T: int
    theta: Fraction
    p_count: np.ndarray = field(repr=False)
    s_count: np.ndarray = field(repr=False)

    @property
    def width(self) -> int:
        return len(self.p_count)

    @property
    def p(self) -> list[Fraction]:
        den = max(self.T - 1, 1)
        return [Fraction(int(c), den) for c in self.p_count]

    @property
    def s(self) -> list[Fraction]:
        return [Fraction(int(c), self.T) for c in self.s_count]

    @property
    def mu(self) -> list[Fraction]:
        return blend(self.p, self.s, self.theta)

    def mu_numerators(self) -> np.ndarray:
        """``mu`` scaled by the common denominator ``den(theta) * T * max(T - 1, 1)``."""
        a, b = self.theta.numerator, self.theta.denominator
        return (
            a * self.T * self.p_count.astype(object)
            + (b - a) * max(self.T - 1, 1) * self.s_count.astype(object)
        )


def primary_counts(trace: ClipTrace) -> np.ndarray:
    bits = bit_matrix(trace.primary_hashes)
    return (bits[:-1] != bits[-1]).sum(axis=0).astype(np.int64)


def secondary_counts(trace: ClipTrace) -> np.ndarray:
    final = trace.final_hash.bits()
    return (bit_matrix(trace.secondary_hashes) != final).sum(axis=0).astype(np.int64)


def primary_uncertainty(trace: ClipTrace) -> list[Fraction]:
    """Fraction of earlier timesteps where each primary bit differs from its final value.

    A single-timestep trace has no history and scores zero everywhere.
    """
    den = max(trace.T - 1, 1)
    return [Fraction(int(c), den) for c in primary_counts(trace)]


def secondary_uncertainty(trace: ClipTrace) -> list[Fraction]:
    return [Fraction(int(c), trace.T) for c in secondary_counts(trace)]


def blend(p: Sequence, s: Sequence, theta) -> list[Fraction]:
    theta = _unit_fraction(theta, "theta")
    if len(p) != len(s):
        raise WidthMismatch("p and s differ in width")
    return [theta * Fraction(pi) + (1 - theta) * Fraction(si) for pi, si in zip(p, s)]


def scores(trace: ClipTrace, theta) -> UncertaintyScores:
    return UncertaintyScores(
        trace.T, _unit_fraction(theta, "theta"), primary_counts(trace), secondary_counts(trace)
    )


def top_k_mask(mu: Sequence, k_bs: int) -> BitMask:
    """Flag the ``k_bs`` largest entries of ``mu``; ties go to the lower index.

    ``mu`` may hold Fractions, ints or any mutually comparable exact values.
    """
    d = len(mu)
    if not 0 <= k_bs <= d:
        raise ValueError(f"k_bs must lie in [0, {d}], got {k_bs}")
    order = sorted(range(d), key=lambda i: (-mu[i], i))
    return BitMask.from_positions(d, order[:k_bs])


def uncertainty_mask(trace: ClipTrace, theta, k_bs: int) -> BitMask:
    """The full pipeline for one clip: counts, blend, top ``k_bs`` flags."""
    return top_k_mask(list(scores(trace, theta).mu_numerators()), k_bs)
