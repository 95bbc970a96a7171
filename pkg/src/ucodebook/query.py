"""Top-K retrieval under raw and uncertainty-discounted Hamming distance.

For a query ``q`` and entry ``r`` with mask ``m`` the discounted distance is
``popcount(q ^ r) - gamma * popcount((q ^ r) & m)``. With ``gamma = a / b``
every ranking works on the integer ``b * raw - a * masked``, so ties are
exact and resolved by ascending entry index.

The filtered path ranks everything by raw distance first, decodes masks
only for a small candidate pool, and (by default) grows the pool until no
entry outside it can still reach the top K. Since the mask has exactly
``k_bs`` ones, an entry at raw distance ``h`` cannot score below
``h - gamma * min(k_bs, h)``.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .bitcore import BitHash, WidthMismatch, hamming_many, masked_hamming_many, masked_popcount, popcount, xor
from .codebook import Codebook
from .uncertainty import ClipTrace, _unit_fraction

DEFAULT_CACHE_SIZE = 4096
EXPANSION_FLOOR = 1024


@dataclass(frozen=True)
class QueryParams:
    gamma: Fraction = Fraction(0)
    K: int = 10
    K_prime: int | None = None
    mode: str = "filtered"
    expand: bool = True

    def __post_init__(self):
        object.__setattr__(self, "gamma", _unit_fraction(self.gamma, "gamma"))
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.K_prime is not None and self.K_prime < self.K:
            raise ValueError("K_prime must be >= K")
        if self.mode not in ("exact", "filtered"):
            raise ValueError(f"mode must be 'exact' or 'filtered', got {self.mode!r}")

    @property
    def pool_size(self) -> int:
        return self.K_prime if self.K_prime is not None else max(4 * self.K, 64)


class ResultItem(NamedTuple):
    index: int
    delta: Fraction
    raw: int


@dataclass
class QueryResult:
    items: list[ResultItem]
    t: int | None = None
    decode_count: int = 0
    pool_size: int = 0
    stage1_seconds: float = 0.0
    stage2_seconds: float = 0.0

    @property
    def indices(self) -> list[int]:
        return [it.index for it in self.items]

    def same_ranking(self, other: "QueryResult") -> bool:
        return self.items == other.items


# ---------- single-pair distances ----------


def raw_distance(q: BitHash, r: BitHash) -> int:
    return popcount(xor(q, r))


def modulated_distance(q: BitHash, r: BitHash, mask: BitHash, gamma) -> Fraction:
    gamma = _unit_fraction(gamma, "gamma")
    x = xor(q, r)
    return popcount(x) - gamma * masked_popcount(x, mask)


# ---------- selection ----------


def smallest(keys: np.ndarray, k: int) -> np.ndarray:
    """Positions of the ``k`` smallest keys ordered by (key, position).

    Partial selection first, then a stable sort of the survivors only.
    """
    n = len(keys)
    k = min(k, n)
    if k <= 0:
        return np.zeros(0, dtype=np.intp)
    if k < n:
        kth = np.partition(keys, k - 1)[k - 1]
        sel = np.flatnonzero(keys <= kth)
    else:
        sel = np.arange(n)
    return sel[np.argsort(keys[sel], kind="stable")][:k]


def _lower_bound_limit(gamma: Fraction, k_bs: int, d: int, thr: int) -> int:
    """Largest raw distance whose best possible scaled score is still <= thr."""
    a, b = gamma.numerator, gamma.denominator
    h_max = -1
    for h in range(d + 1):
        if b * h - a * min(k_bs, h) <= thr:
            h_max = h
    return h_max


# ---------- engine ----------


class MaskCache:
    """Fixed-capacity LRU of decoded masks keyed by entry index."""

    def __init__(self, n_entries: int, row_bytes: int, capacity: int):
        self.capacity = capacity
        self.store = np.zeros((capacity, row_bytes), dtype=np.uint8)
        self.slot_entry = np.full(capacity, -1, dtype=np.intp)
        self.stamp = np.full(capacity, -1, dtype=np.int64)
        self.entry_slot = np.full(n_entries, -1, dtype=np.int32)
        self.tick = 0

    def fetch(self, indices: np.ndarray, decode) -> tuple[np.ndarray, int]:
        """Rows for unique ``indices``; misses go through ``decode`` and are cached."""
        self.tick += 1
        slots = self.entry_slot[indices]
        hit = slots >= 0
        out = np.empty((len(indices), self.store.shape[1]), dtype=np.uint8)
        out[hit] = self.store[slots[hit]]
        self.stamp[slots[hit]] = self.tick
        missing = np.flatnonzero(~hit)
        if not len(missing):
            return out, 0
        decoded = decode(indices[missing])
        out[missing] = decoded
        take = min(len(missing), self.capacity)
        if take < self.capacity:
            victims = np.argpartition(self.stamp, take - 1)[:take]
        else:
            victims = np.arange(self.capacity)
        old = self.slot_entry[victims]
        self.entry_slot[old[old >= 0]] = -1
        fresh_ids = indices[missing[-take:]]
        self.slot_entry[victims] = fresh_ids
        self.entry_slot[fresh_ids] = victims
        self.store[victims] = decoded[-take:]
        self.stamp[victims] = self.tick
        return out, len(missing)


class QueryEngine:
    """Query session over one loaded codebook.

    Decoded masks are kept in an LRU cache of ``cache_size`` entries; the
    cache only saves work and never changes a result. ``decode_count``
    counts masks actually unranked by this session.
    """

    def __init__(self, codebook: Codebook, cache_size: int = DEFAULT_CACHE_SIZE):
        self.cb = codebook
        self.cache_size = cache_size
        self._cache = MaskCache(len(codebook), codebook.d // 8, cache_size) if cache_size > 0 else None
        self._lock = threading.Lock()
        self.decode_count = 0

    def _query_bytes(self, q: BitHash, params: QueryParams | None = None) -> np.ndarray:
        if params is not None and params.gamma.denominator * self.cb.d >= 1 << 62:
            raise ValueError("gamma denominator too large for integer scoring")
        if q.width != self.cb.d:
            raise WidthMismatch(f"query width {q.width} != codebook width {self.cb.d}")
        return np.frombuffer(q.to_bytes(), dtype=np.uint8)

    def masks(self, indices: np.ndarray) -> np.ndarray:
        return self._masks(indices)[0]

    def _masks(self, indices) -> tuple[np.ndarray, int]:
        """Packed masks for ``indices`` and the number of them actually decoded."""
        indices = np.asarray(indices, dtype=np.intp)
        with self._lock:
            if self._cache is None:
                self.decode_count += len(indices)
                return self.cb.decode_masks(indices), len(indices)
            out, fresh = self._cache.fetch(indices, self.cb.decode_masks)
            self.decode_count += fresh
            return out, fresh

    def _candidates(self, exclude) -> np.ndarray | None:
        if not exclude:
            return None
        keep = np.ones(len(self.cb), dtype=bool)
        keep[np.asarray(list(exclude), dtype=np.intp)] = False
        return np.flatnonzero(keep)

    def _finish(self, ids, keys, raws, b, t, decodes, pool, s1, s2) -> QueryResult:
        items = [
            ResultItem(int(i), Fraction(int(k), b), int(h)) for i, k, h in zip(ids, keys, raws)
        ]
        return QueryResult(items, t, decodes, pool, s1, s2)

    def topk_raw(self, q: BitHash, K: int, exclude=(), t=None) -> QueryResult:
        """Plain Hamming ranking; no masks involved."""
        t0 = time.perf_counter()
        raw = hamming_many(self._query_bytes(q), self.cb.hashes)
        cand = self._candidates(exclude)
        pos = smallest(raw if cand is None else raw[cand], K)
        ids = pos if cand is None else cand[pos]
        s1 = time.perf_counter() - t0
        return self._finish(ids, raw[ids], raw[ids], 1, t, 0, len(raw), s1, 0.0)

    def topk_exact(self, q: BitHash, params: QueryParams, exclude=(), t=None) -> QueryResult:
        """Score every entry; masks are decoded for all of them."""
        qb = self._query_bytes(q, params)
        a, b = params.gamma.numerator, params.gamma.denominator
        t0 = time.perf_counter()
        raw = hamming_many(qb, self.cb.hashes)
        t1 = time.perf_counter()
        masks = self.cb.decode_masks()
        with self._lock:
            self.decode_count += len(masks)
        keys = b * raw.astype(np.int64) - a * masked_hamming_many(qb, self.cb.hashes, masks)
        cand = self._candidates(exclude)
        pos = smallest(keys if cand is None else keys[cand], params.K)
        ids = pos if cand is None else cand[pos]
        t2 = time.perf_counter()
        return self._finish(ids, keys[ids], raw[ids], b, t, len(masks), len(masks), t1 - t0, t2 - t1)

    def topk_filtered(self, q: BitHash, params: QueryParams, exclude=(), t=None) -> QueryResult:
        qb = self._query_bytes(q, params)
        a, b = params.gamma.numerator, params.gamma.denominator
        K = params.K
        decodes = 0

        t0 = time.perf_counter()
        raw_all = hamming_many(qb, self.cb.hashes)
        cand = self._candidates(exclude)
        raw = raw_all if cand is None else raw_all[cand]
        pool = np.sort(smallest(raw, params.pool_size))
        t1 = time.perf_counter()

        def score(positions):
            nonlocal decodes
            ids = positions if cand is None else cand[positions]
            masks, fresh = self._masks(ids)
            decodes += fresh
            masked = masked_hamming_many(qb, self.cb.hashes[ids], masks)
            return b * raw[positions].astype(np.int64) - a * masked

        keys = score(pool)
        region = None
        while params.expand and len(pool) < len(raw):
            top = smallest(keys, K)
            if len(top) < K:
                break
            thr = int(keys[top[-1]])
            h_max = _lower_bound_limit(params.gamma, self.cb.k_bs, self.cb.d, thr)
            if region is None:
                # the threshold only falls, so later rounds search inside this region
                region = np.flatnonzero(raw <= h_max)
                region = region[~np.isin(region, pool, assume_unique=True)]
            else:
                region = region[raw[region] <= h_max]
            if not len(region):
                break
            # bounded growth per round lets the threshold tighten before the next one
            step = max(4 * len(pool), EXPANSION_FLOOR)
            if len(region) > step:
                new = np.sort(region[smallest(raw[region], step)])
                region = np.setdiff1d(region, new, assume_unique=True)
            else:
                new, region = region, region[:0]
            merged = np.concatenate([pool, new])
            order = np.argsort(merged, kind="stable")
            keys = np.concatenate([keys, score(new)])[order]
            pool = merged[order]

        top = smallest(keys, K)
        positions = pool[top]
        ids = positions if cand is None else cand[positions]
        t2 = time.perf_counter()
        return self._finish(
            ids, keys[top], raw[positions], b, t,
            decodes, len(pool), t1 - t0, t2 - t1,
        )

    def topk(self, q: BitHash, params: QueryParams, exclude=(), t=None) -> QueryResult:
        if params.mode == "exact":
            return self.topk_exact(q, params, exclude, t)
        return self.topk_filtered(q, params, exclude, t)

    def stream_query(
        self, trace, params: QueryParams, schedule: Sequence[int] | None = None, exclude=()
    ) -> list[QueryResult]:
        """One result per scheduled timestep ``t`` (1-based), querying with ``S(Q_t)``.

        ``trace`` is a :class:`ClipTrace` or a sequence of secondary hashes.
        """
        hashes = trace.secondary_hashes if isinstance(trace, ClipTrace) else tuple(trace)
        T = len(hashes)
        schedule = [T] if schedule is None else sorted(set(schedule))
        for t in schedule:
            if not 1 <= t <= T:
                raise ValueError(f"timestep {t} outside [1, {T}]")
        return [self.topk(hashes[t - 1], params, exclude, t) for t in schedule]


def topk_exact(q: BitHash, cb: Codebook, params: QueryParams) -> QueryResult:
    return QueryEngine(cb).topk_exact(q, params)


def topk_filtered(q: BitHash, cb: Codebook, params: QueryParams) -> QueryResult:
    return QueryEngine(cb).topk_filtered(q, params)


def stream_query(trace, cb: Codebook, params: QueryParams, schedule=None) -> list[QueryResult]:
    return QueryEngine(cb).stream_query(trace, params, schedule)
