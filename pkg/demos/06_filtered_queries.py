"""
Fast path: filter by raw distance, decode few masks
===================================================

Decoding a mask costs far more than a popcount, so the filtered path ranks
everything by raw distance first and decodes masks only for a small pool.
The pool grows until no outside entry can still make the top K, so the
answer equals the exhaustive one.
"""

from ucodebook import QueryParams
from ucodebook.bench import run_bench
from ucodebook.codebook import random_codebook

for n in (10_000, 100_000):
    cb = random_codebook(n, 128, 16, seed=0)
    for expand in (True, False):
        rep = run_bench(cb, QueryParams(0.75, K=10, expand=expand), queries=10)
        print(f"expand={expand}")
        print(rep.to_text())
        print()

exact = run_bench(random_codebook(20_000, 128, 16), QueryParams(0.75, mode="exact"), queries=3)
print("exact mode decodes every entry:", exact.max_decodes)
