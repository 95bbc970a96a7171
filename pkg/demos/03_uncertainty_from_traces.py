"""
Which bits of a stored hash are unreliable?
===========================================

Each database clip comes with the hash sequence its encoders produced as the
clip played. Bits that kept flipping before settling are the ones to trust
least. The synthetic generator plants such bits, so we can check the result.
"""

from ucodebook import SynthConfig
from ucodebook.ingest import synthesize_clips
from ucodebook.uncertainty import scores, top_k_mask

cfg = SynthConfig(class_count=2, clips_per_class=3, queries_per_class=0, d=32, T=12,
                  centroid_distance=8, unstable_bit_count=4, seed=7)
db, _ = synthesize_clips(cfg)
clip = db[0]
tr = clip.trace

print("primary trace of", tr.clip_id)
for h in tr.primary_hashes[:4]:
    print(" ", h)
print("  ...")
print(" ", tr.final_hash, "(stored)")

# disagreement frequencies against the stored hash, blended half and half
sc = scores(tr, 0.5)
top = sorted(range(cfg.d), key=lambda i: -sc.mu[i])[:6]
for i in top:
    print(f"bit {i:>2}: p={sc.p[i]}, s={sc.s[i]}, mu={sc.mu[i]}")

mask = top_k_mask(sc.mu, cfg.unstable_bit_count)
print("mask   ", mask)
print("planted", clip.unstable, "found", mask.positions())
