"""Query throughput measurement against a plain Hamming scan."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .bitcore import BitHash
from .codebook import Codebook
from .query import QueryEngine, QueryParams


@dataclass(frozen=True)
class BenchReport:
    n: int
    d: int
    k_bs: int
    mode: str
    queries: int
    queries_per_second: float
    median_latency_s: float
    median_raw_latency_s: float
    latency_ratio: float
    stage1_share: float
    stage2_share: float
    mean_decodes: float
    max_decodes: int
    max_pool: int
    initial_pool: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(
            [
                f"codebook       n={self.n} d={self.d} k_bs={self.k_bs} mode={self.mode}",
                f"queries        {self.queries} at {self.queries_per_second:.1f}/s",
                f"median latency {self.median_latency_s * 1e3:.2f} ms "
                f"(raw scan {self.median_raw_latency_s * 1e3:.2f} ms, ratio {self.latency_ratio:.2f})",
                f"time split     stage 1 {self.stage1_share:.1%}, stage 2 {self.stage2_share:.1%}",
                f"decodes/query  mean {self.mean_decodes:.1f}, max {self.max_decodes} "
                f"(initial pool {self.initial_pool}, largest pool {self.max_pool})",
            ]
        )


def random_queries(d: int, count: int, seed: int = 0) -> list[BitHash]:
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, 256, (count, d // 8), dtype=np.uint8)
    return [BitHash.from_bytes(r.tobytes(), d) for r in rows]


def run_bench(
    cb: Codebook,
    params: QueryParams,
    queries: int = 20,
    seed: int = 0,
    warmup: int = 2,
) -> BenchReport:
    """Time ``queries`` random queries in ``params.mode`` and the same queries by raw scan.

    Each query runs in a fresh session so no decode is served from cache.
    """
    qs = random_queries(cb.d, queries + warmup, seed)
    for q in qs[:warmup]:
        QueryEngine(cb).topk(q, params)
        QueryEngine(cb).topk_raw(q, params.K)
    lat, raw_lat, s1, s2, decodes, pools = [], [], [], [], [], []
    for q in qs[warmup:]:
        engine = QueryEngine(cb)
        t0 = time.perf_counter()
        res = engine.topk(q, params)
        lat.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        engine.topk_raw(q, params.K)
        raw_lat.append(time.perf_counter() - t0)
        s1.append(res.stage1_seconds)
        s2.append(res.stage2_seconds)
        decodes.append(res.decode_count)
        pools.append(res.pool_size)
    med, med_raw = statistics.median(lat), statistics.median(raw_lat)
    total_stage = sum(s1) + sum(s2)
    return BenchReport(
        n=len(cb),
        d=cb.d,
        k_bs=cb.k_bs,
        mode=params.mode,
        queries=queries,
        queries_per_second=queries / sum(lat),
        median_latency_s=med,
        median_raw_latency_s=med_raw,
        latency_ratio=med / med_raw,
        stage1_share=sum(s1) / total_stage if total_stage else 0.0,
        stage2_share=sum(s2) / total_stage if total_stage else 0.0,
        mean_decodes=float(np.mean(decodes)),
        max_decodes=int(max(decodes)),
        max_pool=int(max(pools)),
        initial_pool=min(params.pool_size, len(cb)),
    )
