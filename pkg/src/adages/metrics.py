"""False discovery and power functionals, per-trial bound checks, summaries."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .aggregation import AggregationOutcome, DimensionError, SelectionSet, VoteProfile

__all__ = [
    "fdp",
    "tpp",
    "diff_count",
    "power_shrinkage",
    "TrialRecord",
    "SweepSummary",
    "summarize",
    "summarize_rows",
    "lemma1_holds",
    "lemma1_count_holds",
    "union_bound_holds",
    "intersection_bound_holds",
    "threshold_count_holds",
    "theorem2_bound_holds",
]


def _check(a: SelectionSet, b: SelectionSet):
    if a.d != b.d:
        raise DimensionError(f"dimension mismatch: {a.d} != {b.d}")


def fdp(est: SelectionSet, truth: SelectionSet) -> float:
    """Fraction of ``est`` outside ``truth``; 0 for an empty selection."""
    _check(est, truth)
    if not est.members:
        return 0.0
    return len(est.members - truth.members) / len(est.members)


def tpp(est: SelectionSet, truth: SelectionSet) -> float:
    _check(est, truth)
    if not truth.members:
        raise ValueError("power is undefined for an empty true support")
    return len(est.members & truth.members) / len(truth.members)


def diff_count(union_est: SelectionSet, adages_est: SelectionSet, truth: SelectionSet) -> int:
    """True features the Union rule finds that the aggregate misses."""
    _check(union_est, adages_est)
    _check(union_est, truth)
    if not adages_est.members <= union_est.members:
        raise ValueError("aggregate selection is not contained in the union")
    return len(union_est.members & truth.members) - len(adages_est.members & truth.members)


def power_shrinkage(c_star, est_size, k, truth_size, fdp_value):
    return c_star * est_size * fdp_value / (k * truth_size)


# Per-trial count inequalities. All take machine sets, truth and the vote profile.

def _false_counts(machine_sets, truth):
    return sum(len(s.members - truth.members) for s in machine_sets)


def threshold_count_holds(profile: VoteProfile, c: int, subset: SelectionSet) -> bool:
    """``c * |S_(c) & A| <= sum_j in A m_j`` for an arbitrary index set ``A``."""
    lhs = c * sum(1 for j in subset.members if profile.counts[j] >= c)
    return lhs <= sum(profile.counts[j] for j in subset.members)


def union_bound_holds(machine_sets, union_est, truth) -> bool:
    return len(union_est.members - truth.members) <= _false_counts(machine_sets, truth)


def intersection_bound_holds(machine_sets, inter_est, truth) -> bool:
    k = len(machine_sets)
    return k * len(inter_est.members - truth.members) <= _false_counts(machine_sets, truth)


def lemma1_holds(profile: VoteProfile, c: int, est: SelectionSet, truth: SelectionSet) -> bool:
    """``sum_{j in S} m_j <= k |S & est| + c |S^c & est|`` as stated for the
    aggregate at threshold ``c``.

    This can fail: a true feature with ``0 < m_j < c`` contributes to the left
    side and to neither term on the right.
    """
    left = sum(profile.counts[j] for j in truth.members)
    right = profile.k * len(est.members & truth.members) + c * len(est.members - truth.members)
    return left <= right


def lemma1_count_holds(profile: VoteProfile, c: int, est: SelectionSet, truth: SelectionSet) -> bool:
    """Always-valid split of the true votes:
    ``sum_{j in S} m_j <= k |S & est| + (c - 1) |S - est|``."""
    left = sum(profile.counts[j] for j in truth.members)
    right = profile.k * len(est.members & truth.members) + (c - 1) * len(truth.members - est.members)
    return left <= right


def theorem2_bound_holds(c, est: SelectionSet, truth: SelectionSet, machine_sets) -> bool | None:
    """Power lower bound ``tpp >= mean(tpp_i) - (c/k)(1+gamma) fdp`` with
    ``gamma = max(0, |est|/|S| - 1)``. ``None`` when the size/threshold
    conditions (``|est| <= 1.5 |S|``, ``c <= k/2``) do not hold."""
    k = len(machine_sets)
    s = len(truth.members)
    if not (2 * len(est.members) <= 3 * s and 2 * c <= k):
        return None
    gamma = max(Fraction(0), Fraction(len(est.members), s) - 1)
    mean_tpp = Fraction(sum(len(m.members & truth.members) for m in machine_sets), k * s)
    f = Fraction(len(est.members - truth.members), max(1, len(est.members)))
    return Fraction(len(est.members & truth.members), s) >= mean_tpp - Fraction(c, k) * (1 + gamma) * f


@dataclass
class TrialRecord:
    """One Monte-Carlo repetition.

    ``truth`` is the true support and ``beta`` the coefficient vector drawn
    for this trial. ``outcomes`` maps a method name to its ``AggregationOutcome``; ``fdp`` and
    ``tpp`` are keyed the same way.
    """

    truth: SelectionSet
    machine_sets: list
    outcomes: dict
    k: int
    d: int
    n: int
    s: int
    rep: int
    seed: int
    sweep_value: int | None = None
    beta: np.ndarray | None = None
    fdp: dict = field(default_factory=dict)
    tpp: dict = field(default_factory=dict)
    machine_fdp: list = field(default_factory=list)
    machine_tpp: list = field(default_factory=list)
    c_star: int | None = None
    c_tilde: int | None = None
    diff: int | None = None
    failed: bool = False
    failed_methods: list = field(default_factory=list)

    @classmethod
    def build(cls, truth, machine_sets, outcomes: dict[str, AggregationOutcome], **meta):
        rec = cls(truth=truth, machine_sets=list(machine_sets), outcomes=dict(outcomes), **meta)
        for name, out in rec.outcomes.items():
            rec.fdp[name] = fdp(out.selected, truth)
            rec.tpp[name] = tpp(out.selected, truth)
        rec.machine_fdp = [fdp(m, truth) for m in rec.machine_sets]
        rec.machine_tpp = [tpp(m, truth) for m in rec.machine_sets]
        if "adages" in rec.outcomes:
            rec.c_star = rec.outcomes["adages"].threshold_used
            if "union" in rec.outcomes:
                rec.diff = diff_count(rec.outcomes["union"].selected,
                                      rec.outcomes["adages"].selected, truth)
        if "adages_m" in rec.outcomes:
            rec.c_tilde = rec.outcomes["adages_m"].threshold_used
        return rec

    def rows(self) -> list[dict]:
        """Trial CSV rows, one per method."""
        out = []
        for name, o in self.outcomes.items():
            out.append({
                "method": name, "k": self.k, "d": self.d, "n": self.n, "s": self.s,
                "rep": self.rep, "seed": self.seed,
                "fdp": self.fdp[name], "power": self.tpp[name],
                "c_star": o.threshold_used, "c0": o.c0,
                "agg_size": o.selected.size(), "failures": 0,
            })
        return out


@dataclass(frozen=True)
class SweepSummary:
    method: str
    k: int
    d: int
    mean_fdp: float
    mean_power: float
    reps: int
    c_star_quantiles: tuple

    def row(self) -> dict:
        qs = self.c_star_quantiles
        return {
            "method": self.method, "k": self.k, "d": self.d,
            "mean_fdp": self.mean_fdp, "mean_power": self.mean_power, "reps": self.reps,
            "c_star_min": qs[0], "c_star_q25": qs[1], "c_star_med": qs[2],
            "c_star_q75": qs[3], "c_star_max": qs[4],
        }


def summarize_rows(rows, keys=("method", "k", "d")) -> list[SweepSummary]:
    """Group trial rows and average them. Failed rows (``failures > 0``) are
    left out of the means and the rep count."""
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to summarize")
    groups = defaultdict(list)
    order = []
    for r in rows:
        key = tuple(r[kk] for kk in keys)
        if key not in groups:
            order.append(key)
        if int(r["failures"]) == 0:
            groups[key].append(r)
        else:
            groups.setdefault(key, [])
    out = []
    for key in order:
        grp = groups[key]
        meta = dict(zip(keys, key))
        if grp:
            f = float(np.mean([float(r["fdp"]) for r in grp]))
            p = float(np.mean([float(r["power"]) for r in grp]))
            cs = np.array([float(r["c_star"]) for r in grp])
            qs = tuple(float(v) for v in np.percentile(cs, [0, 25, 50, 75, 100]))
        else:
            f = p = float("nan")
            qs = (float("nan"),) * 5
        out.append(SweepSummary(
            method=str(meta.get("method")), k=int(meta.get("k", 0)), d=int(meta.get("d", 0)),
            mean_fdp=f, mean_power=p, reps=len(grp), c_star_quantiles=qs,
        ))
    return out


def summarize(records, keys=("method", "k", "d")) -> list[SweepSummary]:
    rows = [row for rec in records for row in rec.rows()]
    return summarize_rows(rows, keys)
