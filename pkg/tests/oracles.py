"""Independent reference evaluations used by the tests.

Written straight from the definitions with explicit set construction, sharing
no code with the package under test.
"""

import math
from fractions import Fraction


def brute_adages(machines, d):
    """``(c0, c_star, c_tilde, selected)`` for a list of python sets."""
    k = len(machines)
    votes = [sum(1 for s in machines if j in s) for j in range(d)]
    level = {c: {j for j in range(d) if votes[j] >= c} for c in range(1, k + 2)}
    s_bar = Fraction(sum(len(s) for s in machines), k)
    c0 = max(c for c in range(1, k + 1) if len(level[c]) >= s_bar)
    eta = {}
    for c in range(1, k + 1):
        eta[c] = math.inf if c == k else Fraction(len(level[c]) + 1, len(level[c + 1]) + 1)
    c_star = min(range(1, c0 + 1), key=lambda c: (eta[c], c))
    c_tilde = min(range(1, c0 + 1), key=lambda c: (c * len(level[c]), c))
    return c0, c_star, c_tilde, level[c_star]


def knockoff_plus_brute(w, q):
    """Knockoff+ threshold by scanning every candidate in increasing order."""
    cands = sorted({abs(v) for v in w if v != 0})
    for t in cands:
        neg = sum(1 for v in w if v <= -t)
        pos = sum(1 for v in w if v >= t)
        if (1 + neg) / max(1, pos) <= q:
            return t, {j for j, v in enumerate(w) if v >= t}
    return math.inf, set()
