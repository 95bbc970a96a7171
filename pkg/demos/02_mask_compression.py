"""
Storing a mask as a combination rank
====================================

A mask of width d with exactly k ones is one of C(d, k) possibilities, so
its lexicographic position fits in ceil(log2 C(d, k)) bits instead of d.
"""

from ucodebook import BitMask, binomial, compressed_width, lut_feasibility, rank_lex, unrank_factoradic
from ucodebook.combinatorics import compress, saving_lower_bound, saving_margin

# the 7-bit, two-ones example: 21 possibilities, so 5 bits per mask
m = BitMask.from_positions(7, [2, 5])
cm = compress(m)
print(m, "->", cm.bit_string(), f"(rank {cm.rank} of {binomial(7, 2)})")
print("back:", unrank_factoradic(rank_lex(m)))

# widths used for real hashes
for d in (96, 128, 192, 256):
    row = [compressed_width(d, k) for k in (d // 8, d // 4, 3 * d // 8, d // 2)]
    print(f"d={d:>3}  d_u at k=d/8, d/4, 3d/8, d/2: {row}")

# even the worst case k = d/2 saves bits; the bound is on the exact log, before rounding up
d = 128
print(f"d={d}, k={d // 2}: d - log2 C = {saving_margin(d, d // 2):.3f} > {saving_lower_bound(d):.3f}, "
      f"stored width {compressed_width(d, d // 2)} bits")

# a full rank -> mask table is only possible for tiny shapes
for d, k in ((12, 4), (96, 48)):
    est = lut_feasibility(d, k)
    print(f"lookup table for d={d}, k={k}: {est.bits:.3g} bits, feasible={est.feasible}")
