"""Command-line entry point: ``ucodebook {synth,build,query,eval,sweep,bench}``.

Exit codes: 0 success, 1 usage error or missing input file, 2 invalid input
data, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction

from . import codebook as cbmod
from . import ingest
from .bench import run_bench
from .evaluation import DEFAULT_LEVELS, EvalProtocol, SweepGrid, evaluate, observation_schedule, sweep
from .query import QueryEngine, QueryParams

log = logging.getLogger("ucodebook")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "UCODEBOOK_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or ratio: {text!r}") from None


def _list(cast):
    def parse(text: str):
        try:
            return [cast(x) for x in text.split(",") if x.strip()]
        except (ValueError, argparse.ArgumentTypeError):
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _default_jobs() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(text)


def _query_params(args) -> QueryParams:
    return QueryParams(args.gamma, args.K, args.K_prime, args.mode, not args.no_expand)


# ---------- subcommands ----------


def cmd_synth(args) -> int:
    cfg = ingest.SynthConfig(
        class_count=args.classes,
        clips_per_class=args.clips_per_class,
        queries_per_class=args.queries_per_class,
        d=args.d,
        T=args.T,
        centroid_distance=args.centroid_distance,
        clip_noise=args.clip_noise,
        unstable_bit_count=args.unstable,
        instability_rate=args.instability,
        secondary_lag=args.lag,
        seed=args.seed,
    )
    db, queries = ingest.synthesize(cfg)
    ingest.write(args.database_out, db, cfg.d)
    ingest.write(args.queries_out, queries, cfg.d)
    _emit(
        args,
        {"config": cfg.to_dict(), "database": len(db), "queries": len(queries)},
        f"wrote {len(db)} database traces to {args.database_out}\n"
        f"wrote {len(queries)} query traces to {args.queries_out}",
    )
    return EXIT_OK


def cmd_build(args) -> int:
    traces = ingest.parse(args.traces)
    d = traces[0].width if traces else None
    if d is None:
        with open(args.traces, encoding="utf-8") as fh:
            d = ingest.parse_header(fh.readline())
    if args.k_bs == 0:
        log.warning("k_bs=0: every mask is empty and ranking reduces to plain Hamming distance")
    cb = cbmod.build(traces, args.theta, args.k_bs, d)
    cb.save(args.output)
    h = cb.header
    size = os.path.getsize(args.output)
    ok = cb.redundancy_ok()
    payload = {
        "n": h.n, "d": h.d, "k_bs": h.k_bs, "d_u": h.d_u, "theta": str(h.theta),
        "bytes": size, "mask_region_bits": h.mask_region_bits,
        "hash_region_bits": h.hash_region_bits,
        "margin_bits": h.hash_region_bits - h.mask_region_bits,
        "mask_region_below_dN": ok,
    }
    text = "\n".join(
        [
            f"entries        {h.n}",
            f"hash width d   {h.d}",
            f"k_bs           {h.k_bs}",
            f"mask width d_u {h.d_u}",
            f"file bytes     {size}",
            f"mask region    {h.mask_region_bits} bits (dN = {h.hash_region_bits}, "
            f"margin {h.hash_region_bits - h.mask_region_bits})",
            f"mask region < dN bits: {'yes' if ok else 'no'}",
        ]
    )
    _emit(args, payload, text)
    return EXIT_OK


def _schedule(args, T: int) -> list[int]:
    if args.schedule:
        return args.schedule
    return observation_schedule(T, args.levels or DEFAULT_LEVELS)


def cmd_query(args) -> int:
    cb = cbmod.load(args.codebook)
    queries = ingest.parse(args.queries)
    if args.clip:
        wanted = set(args.clip)
        queries = [q for q in queries if q.clip_id in wanted]
        missing = wanted - {q.clip_id for q in queries}
        if missing:
            raise ValueError(f"unknown query clip(s): {', '.join(sorted(missing))}")
    params = _query_params(args)
    engine = QueryEngine(cb)
    records = []
    for q in queries:
        for res in engine.stream_query(q, params, _schedule(args, q.T)):
            for rank, item in enumerate(res.items, start=1):
                records.append(
                    {
                        "query": q.clip_id, "t": res.t, "rank": rank,
                        "clip_id": cb.clip_ids[item.index],
                        "delta": str(item.delta), "raw": item.raw,
                    }
                )
    if args.format == "json":
        print(json.dumps(records, indent=2))
    elif args.format == "csv":
        print("query,t,rank,clip_id,delta,raw")
        for r in records:
            print(",".join(str(r[k]) for k in ("query", "t", "rank", "clip_id", "delta", "raw")))
    else:
        for r in records:
            print(f"{r['query']}\tt={r['t']}\t#{r['rank']}\t{r['clip_id']}\t"
                  f"delta={r['delta']}\traw={r['raw']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cb = cbmod.load(args.codebook)
    queries = ingest.parse(args.queries)
    protocol = EvalProtocol(queries, cb, args.ks, args.levels or DEFAULT_LEVELS)
    report = evaluate(protocol, _query_params(args), plain=args.plain, jobs=args.jobs)
    if report.excluded_queries:
        log.warning("skipped %d unlabeled queries", report.excluded_queries)
    if args.format == "csv":
        print(report.to_csv(), end="")
    else:
        _emit(args, {"rows": [r.as_dict() for r in report.rows],
                     "excluded_queries": report.excluded_queries}, report.to_text())
    return EXIT_OK


def cmd_sweep(args) -> int:
    db = ingest.parse(args.database)
    queries = ingest.parse(args.queries)
    grid = SweepGrid(args.gammas, args.thetas, args.k_bs_values)
    report = sweep(db, queries, grid, args.ks, args.levels or DEFAULT_LEVELS,
                   QueryParams(0, args.K, args.K_prime, args.mode, not args.no_expand), args.jobs)
    if args.format == "csv":
        print(report.to_csv(), end="")
    else:
        g, t, k = report.best
        _emit(args, {"rows": [r.as_dict() for r in report.rows],
                     "best": {"gamma": float(g), "theta": float(t), "k_bs": k,
                              "score": report.score(report.best)},
                     "grid_mean": report.grid_mean}, report.to_text())
    return EXIT_OK


def cmd_bench(args) -> int:
    params = _query_params(args)
    if args.codebook:
        books = [cbmod.load(args.codebook)]
    else:
        books = [cbmod.random_codebook(n, args.d, args.k_bs, args.seed) for n in args.sizes]
    reports = []
    for cb in books:
        rep = run_bench(cb, params, args.queries, args.seed)
        if params.mode == "filtered" and not params.expand and rep.max_decodes > params.pool_size:
            raise AssertionError("decode count exceeded the candidate pool size")
        reports.append(rep)
    if args.format == "csv":
        keys = list(reports[0].as_dict())
        print(",".join(keys))
        for rep in reports:
            print(",".join(str(v) for v in rep.as_dict().values()))
    else:
        _emit(args, {"runs": [r.as_dict() for r in reports]},
              "\n\n".join(r.to_text() for r in reports))
    return EXIT_OK


# ---------- parser ----------


def _add_format(p, choices=("text", "json", "csv")):
    p.add_argument("--format", choices=choices, default="text",
                   help="output format (machine-readable: json or csv)")


def _add_query_flags(p, with_gamma=True):
    if with_gamma:
        p.add_argument("--gamma", type=_fraction, default=Fraction(0),
                       help="discount for conflicts on uncertain bits, in [0, 1]")
    p.add_argument("--K", type=int, default=10, help="results per query")
    p.add_argument("--K-prime", dest="K_prime", type=int, default=None,
                   help="initial candidate pool for filtered mode (default max(4K, 64))")
    p.add_argument("--mode", choices=("exact", "filtered"), default="filtered")
    p.add_argument("--no-expand", action="store_true",
                   help="keep the candidate pool fixed (faster, not guaranteed exact)")


def _add_levels(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--levels", type=_list(_fraction), default=None,
                   help="observation levels as fractions of the clip, e.g. 1/3,2/3,1")
    g.add_argument("--schedule", type=_list(int), default=None,
                   help="explicit 1-based timesteps, e.g. 8,16,24")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ucodebook", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write synthetic database and query trace files")
    p.add_argument("database_out")
    p.add_argument("queries_out")
    defaults = ingest.SynthConfig()
    p.add_argument("--classes", type=int, default=defaults.class_count)
    p.add_argument("--clips-per-class", type=int, default=defaults.clips_per_class)
    p.add_argument("--queries-per-class", type=int, default=defaults.queries_per_class)
    p.add_argument("--d", type=int, default=defaults.d)
    p.add_argument("--T", type=int, default=defaults.T)
    p.add_argument("--centroid-distance", type=float, default=defaults.centroid_distance)
    p.add_argument("--clip-noise", type=float, default=defaults.clip_noise)
    p.add_argument("--unstable", type=int, default=defaults.unstable_bit_count)
    p.add_argument("--instability", type=float, default=defaults.instability_rate)
    p.add_argument("--lag", type=float, default=defaults.secondary_lag)
    p.add_argument("--seed", type=int, default=defaults.seed)
    _add_format(p, ("text", "json"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="build a codebook from a trace file")
    p.add_argument("traces")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--theta", type=_fraction, default=Fraction(0),
                   help="weight of primary vs secondary uncertainty, in [0, 1]")
    p.add_argument("--k-bs", type=int, required=True, help="uncertain bits flagged per entry")
    _add_format(p, ("text", "json"))
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="rank codebook entries for query traces")
    p.add_argument("codebook")
    p.add_argument("queries")
    p.add_argument("--clip", action="append", help="only this query clip id (repeatable)")
    _add_query_flags(p)
    _add_levels(p)
    _add_format(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="mAP@K per observation level")
    p.add_argument("codebook")
    p.add_argument("queries")
    p.add_argument("--ks", type=_list(int), default=[10])
    p.add_argument("--plain", action="store_true", help="rank by raw Hamming distance only")
    p.add_argument("--levels", type=_list(_fraction), default=None)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    _add_query_flags(p)
    _add_format(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate a gamma x theta x k_bs grid")
    p.add_argument("database")
    p.add_argument("queries")
    p.add_argument("--gammas", type=_list(_fraction), default=[Fraction(x) for x in ("0", "1/4", "1/2", "3/4", "1")])
    p.add_argument("--thetas", type=_list(_fraction), default=[Fraction(x) for x in ("0", "1/4", "1/2", "3/4", "1")])
    p.add_argument("--k-bs-values", type=_list(int), default=[16, 32, 48, 64])
    p.add_argument("--ks", type=_list(int), default=[10])
    p.add_argument("--levels", type=_list(_fraction), default=None)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    _add_query_flags(p, with_gamma=False)
    _add_format(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="query throughput versus a raw Hamming scan")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--codebook", help="benchmark this codebook file")
    src.add_argument("--sizes", type=_list(int), default=[10_000, 100_000, 1_000_000],
                     help="random codebook sizes to benchmark")
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--k-bs", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queries", type=int, default=20)
    _add_query_flags(p)
    _add_format(p)
    p.set_defaults(func=cmd_bench, gamma=Fraction(3, 4))
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        force=True,
    )
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, UnicodeDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
