"""mAP@K retrieval evaluation over observation levels and hyperparameter grids."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .codebook import Codebook, build
from .query import QueryEngine, QueryParams
from .uncertainty import ClipTrace, as_fraction

DEFAULT_LEVELS = (Fraction(1, 3), Fraction(2, 3), Fraction(1))
DEFAULT_GAMMAS = (0, 0.25, 0.5, 0.75, 1)
DEFAULT_THETAS = (0, 0.25, 0.5, 0.75, 1)
REPORT_COLUMNS = ("gamma", "theta", "k_bs", "K", "observation_level", "mAP", "query_count")


def average_precision_at_k(flags: Sequence[bool], total_relevant: int, K: int) -> float:
    """Sum of precision@i at relevant ranks i <= K, over min(K, total_relevant)."""
    if total_relevant <= 0:
        return 0.0
    hits = 0
    acc = 0.0
    for i, rel in enumerate(list(flags)[:K], start=1):
        if rel:
            hits += 1
            acc += hits / i
    return acc / min(K, total_relevant)


def observation_timestep(level, T: int) -> int:
    """``ceil(level * T)``, never below 1."""
    return max(1, math.ceil(as_fraction(level) * T))


def observation_schedule(T: int, levels=DEFAULT_LEVELS) -> list[int]:
    return [observation_timestep(a, T) for a in levels]


@dataclass
class EvalProtocol:
    queries: Sequence[ClipTrace]
    codebook: Codebook
    ks: Sequence[int] = (10,)
    levels: Sequence = DEFAULT_LEVELS


@dataclass(frozen=True)
class QueryOutcome:
    clip_id: str
    level: Fraction
    t: int
    ranking: tuple[int, ...]
    relevance: tuple[bool, ...]
    total_relevant: int
    ap: dict


@dataclass(frozen=True)
class EvalRow:
    gamma: Fraction
    theta: Fraction
    k_bs: int
    K: int
    observation_level: Fraction
    mAP: float
    query_count: int

    def as_dict(self) -> dict:
        return {
            "gamma": float(self.gamma),
            "theta": float(self.theta),
            "k_bs": self.k_bs,
            "K": self.K,
            "observation_level": str(self.observation_level),
            "mAP": self.mAP,
            "query_count": self.query_count,
        }


@dataclass
class EvalReport:
    rows: list[EvalRow]
    outcomes: list[QueryOutcome]
    excluded_queries: int = 0

    def mAP(self, K: int, level) -> float:
        level = as_fraction(level)
        for r in self.rows:
            if r.K == K and r.observation_level == level:
                return r.mAP
        raise KeyError((K, level))

    def mean_over_levels(self, K: int) -> float:
        vals = [r.mAP for r in self.rows if r.K == K]
        return sum(vals) / len(vals)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def to_text(self) -> str:
        return rows_to_text(self.rows)


def rows_to_csv(rows: Sequence[EvalRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.as_dict())
    return buf.getvalue()


def rows_to_text(rows: Sequence[EvalRow]) -> str:
    lines = ["{:>6} {:>6} {:>5} {:>4} {:>6} {:>8} {:>6}".format(*REPORT_COLUMNS[:5], "mAP", "count")]
    for r in rows:
        lines.append(
            f"{float(r.gamma):>6.3g} {float(r.theta):>6.3g} {r.k_bs:>5} {r.K:>4} "
            f"{str(r.observation_level):>6} {r.mAP:>8.4f} {r.query_count:>6}"
        )
    return "\n".join(lines)


def _relevance(cb: Codebook, labels: tuple[str, ...]) -> np.ndarray:
    wanted = set(labels)
    return np.fromiter((bool(wanted.intersection(l)) for l in cb.labels), dtype=bool, count=len(cb))


def evaluate(
    protocol: EvalProtocol,
    params: QueryParams,
    plain: bool = False,
    jobs: int = 1,
    engine: QueryEngine | None = None,
) -> EvalReport:
    """Mean AP@K per (K, observation level).

    ``plain`` ranks by raw Hamming distance alone, ignoring masks and gamma.
    A query never retrieves the database entry that shares its clip id.
    Queries without labels are skipped and counted in ``excluded_queries``.
    """
    cb = protocol.codebook
    queries = [q for q in protocol.queries if q.labels]
    excluded = len(protocol.queries) - len(queries)
    if not queries:
        raise ValueError("no labeled queries to evaluate")
    ks = sorted(set(protocol.ks))
    k_max = ks[-1]
    levels = [as_fraction(a) for a in protocol.levels]
    run_params = QueryParams(params.gamma, k_max, params.K_prime, params.mode, params.expand)
    engine = engine or QueryEngine(cb, cache_size=max(len(cb), 1))

    def one(query: ClipTrace) -> list[QueryOutcome]:
        rel = _relevance(cb, query.labels)
        self_idx = cb.index_of(query.clip_id)
        exclude = () if self_idx is None else (self_idx,)
        if self_idx is not None:
            rel[self_idx] = False
        total = int(rel.sum())
        out = []
        for level in levels:
            t = observation_timestep(level, query.T)
            h = query.secondary_hashes[t - 1]
            if plain:
                res = engine.topk_raw(h, k_max, exclude, t)
            else:
                res = engine.topk(h, run_params, exclude, t)
            ranking = tuple(res.indices)
            flags = tuple(bool(rel[i]) for i in ranking)
            aps = {K: average_precision_at_k(flags, total, K) for K in ks}
            out.append(QueryOutcome(query.clip_id, level, t, ranking, flags, total, aps))
        return out

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            per_query = list(pool.map(one, queries))
    else:
        per_query = [one(q) for q in queries]
    outcomes = [o for group in per_query for o in group]

    gamma = Fraction(0) if plain else params.gamma
    rows = []
    for K in ks:
        for level in levels:
            aps = [o.ap[K] for o in outcomes if o.level == level]
            rows.append(EvalRow(gamma, cb.theta, cb.k_bs, K, level, float(np.mean(aps)), len(aps)))
    return EvalReport(rows, outcomes, excluded)


@dataclass(frozen=True)
class SweepGrid:
    gammas: Sequence = DEFAULT_GAMMAS
    thetas: Sequence = DEFAULT_THETAS
    k_bs_values: Sequence[int] = (16, 32, 48, 64)

    def __post_init__(self):
        if not (self.gammas and self.thetas and self.k_bs_values):
            raise ValueError("every sweep axis needs at least one value")

    def __len__(self) -> int:
        return len(self.gammas) * len(self.thetas) * len(self.k_bs_values)

    def combinations(self):
        return itertools.product(self.thetas, self.k_bs_values, self.gammas)


@dataclass
class SweepReport:
    cells: dict = field(default_factory=dict)
    main_k: int = 10

    @property
    def rows(self) -> list[EvalRow]:
        return [r for rep in self.cells.values() for r in rep.rows]

    def score(self, key) -> float:
        """mAP at the main K averaged over observation levels."""
        return self.cells[key].mean_over_levels(self.main_k)

    @property
    def best(self) -> tuple:
        """(gamma, theta, k_bs) with the highest score; first in grid order on ties."""
        return max(self.cells, key=self.score)

    @property
    def grid_mean(self) -> float:
        return float(np.mean([self.score(k) for k in self.cells]))

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def to_text(self) -> str:
        g, t, k = self.best
        return (
            rows_to_text(self.rows)
            + f"\nbest: gamma={float(g):g} theta={float(t):g} k_bs={k} "
            f"mAP@{self.main_k}={self.score(self.best):.4f}"
            + f"\ngrid mean mAP@{self.main_k}={self.grid_mean:.4f}"
        )


def sweep(
    database: Sequence[ClipTrace],
    queries: Sequence[ClipTrace],
    grid: SweepGrid,
    ks: Sequence[int] = (10,),
    levels=DEFAULT_LEVELS,
    base: QueryParams | None = None,
    jobs: int = 1,
) -> SweepReport:
    """Evaluate every (gamma, theta, k_bs); codebooks are rebuilt per (theta, k_bs) only."""
    base = base or QueryParams()
    report = SweepReport(main_k=10 if 10 in ks else sorted(ks)[0])
    for theta in grid.thetas:
        for k_bs in grid.k_bs_values:
            cb = build(database, theta, k_bs)
            engine = QueryEngine(cb, cache_size=max(len(cb), 1))
            protocol = EvalProtocol(queries, cb, ks, levels)
            for gamma in grid.gammas:
                params = QueryParams(gamma, base.K, base.K_prime, base.mode, base.expand)
                key = (as_fraction(gamma), as_fraction(theta), k_bs)
                report.cells[key] = evaluate(protocol, params, jobs=jobs, engine=engine)
    return report
