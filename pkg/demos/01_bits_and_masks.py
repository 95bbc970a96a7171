"""
Hashes, masks and popcounts
===========================

A hash is a fixed-width bit array. Bit 0 is the leftmost character of the
binary form and the top bit of the first byte.
"""

from ucodebook import BitHash, BitMask, masked_popcount, popcount, xor

q = BitHash.from_hex("f0a5", 16)
r = BitHash.from_hex("f3a1", 16)
print(q, "query")
print(r, "entry")

# conflicting bits between the two hashes
x = xor(q, r)
print(x, "xor, raw distance", popcount(x))

# a mask flags the positions we distrust in the entry
m = BitMask.from_positions(16, [6, 7, 13])
print(m, "mask with", m.ones_count, "ones")
print("conflicts inside the mask:", masked_popcount(x, m))
print("conflicts outside the mask:", masked_popcount(x, m.complement()))
