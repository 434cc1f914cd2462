"""
Vote thresholds on a handful of machines
========================================

Four machines each report a set of feature indices. Counting how many
machines picked each feature gives a vote vector, and every aggregation rule
is just a threshold on those votes.
"""

from adages import SelectionSet, aggregate, threshold_select, vote_counts

#############################################################################
# Machine-wise selections
# -----------------------

d = 8
machines = [
    SelectionSet(d, frozenset({0, 1, 2, 3, 4})),
    SelectionSet(d, frozenset({0, 1, 2, 3})),
    SelectionSet(d, frozenset({0, 1, 2})),
    SelectionSet(d, frozenset({0, 1, 3})),
]
profile = vote_counts(machines)
print("votes per feature:", profile.counts)
print("mean machine-wise size:", profile.s_bar)

#############################################################################
# The threshold chain
# -------------------
# c=1 is the union, c=k the intersection; sets shrink as c grows.

for c in range(1, profile.k + 1):
    print(f"c={c}: {threshold_select(profile, c).sorted()}")

#############################################################################
# Rules side by side
# ------------------
# The adaptive rule looks for the sharpest drop in set size, but never goes
# below the mean machine-wise size.

for rule in ("union", "median", "intersection", "adages", "adages_m"):
    out = aggregate(machines, rule)
    print(f"{rule:<13} c={out.threshold_used} c0={out.c0} -> {out.selected.sorted()}")

ad = aggregate(machines, "adages")
print("complexity ratios:", [str(r) for r in ad.eta_table])

#############################################################################
# When the cap bites
# ------------------
# If every machine adds its own unrepeated noise, the twice-voted set is
# smaller than an average machine's set, c0 drops to 1 and the adaptive
# rule has no choice but the union.

noisy = [SelectionSet(d, frozenset({0, 1, 2, 4 + i})) for i in range(4)]
out = aggregate(noisy, "adages")
print("noisy machines: c0 =", out.c0, "->", out.selected.sorted())
