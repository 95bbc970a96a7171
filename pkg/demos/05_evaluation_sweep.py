"""
Does discounting uncertain bits help retrieval?
===============================================

mAP@10 over the three observation levels, with and without the mask, then
a small hyperparameter sweep.
"""

from ucodebook import EvalProtocol, QueryParams, SweepGrid, SynthConfig, build, evaluate, sweep, synthesize

db, queries = synthesize(SynthConfig(seed=1))
protocol = EvalProtocol(queries, build(db, theta=0, k_bs=16), ks=(10,))

plain = evaluate(protocol, QueryParams(0))
aware = evaluate(protocol, QueryParams(0.75))
print("plain\n" + plain.to_text())
print("gamma=0.75\n" + aware.to_text())
print(f"gain {100 * (aware.mean_over_levels(10) - plain.mean_over_levels(10)):+.2f} points")

small_db, small_q = synthesize(SynthConfig(clips_per_class=20, queries_per_class=5, seed=1))
report = sweep(small_db, small_q, SweepGrid((0, 0.5, 1), (0, 1), (8, 16)))
print()
print(report.to_text().splitlines()[-2])
print(report.to_text().splitlines()[-1])
