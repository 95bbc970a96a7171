"""
Build a codebook and query it
=============================

The codebook keeps one hash and one compressed mask per clip. At query time
conflicts on flagged bits count for only (1 - gamma) of a conflict.
"""

import io
import tempfile
from pathlib import Path

from ucodebook import QueryEngine, QueryParams, SynthConfig, build, load, synthesize

cfg = SynthConfig(class_count=4, clips_per_class=15, queries_per_class=2, seed=3)
db, queries = synthesize(cfg)

cb = build(db, theta=0.25, k_bs=16)
h = cb.header
print(cb)
print(f"masks take {h.mask_region_bits} bits, hashes {h.hash_region_bits} bits")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.ucb"
    cb.save(path)
    print("file size", path.stat().st_size, "bytes, reload equal:", load(path) == cb)

engine = QueryEngine(cb)
query = queries[0]
print("\nquery", query.clip_id, query.labels)
for gamma in (0, 0.75):
    res = engine.topk(query.secondary_hashes[-1], QueryParams(gamma, K=5))
    print(f"gamma={gamma}")
    for item in res.items:
        print(f"  {cb.clip_ids[item.index]:<12} delta={str(item.delta):<6} raw={item.raw}")

# the same query at one third, two thirds and all of the clip
for res in engine.stream_query(query, QueryParams(0.75, K=3), [8, 16, 24]):
    print(f"t={res.t:>2}:", [cb.clip_ids[i] for i in res.indices])
