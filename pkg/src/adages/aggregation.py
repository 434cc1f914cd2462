"""Vote-count aggregation of per-machine selection sets.

Everything here works on exact integers and ``fractions.Fraction``; no data,
only index sets, ever reaches this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "AggregationError",
    "DimensionError",
    "DegenerateInputError",
    "SelectionSet",
    "VoteProfile",
    "Rule",
    "UNION",
    "INTERSECTION",
    "MEDIAN",
    "ADAGES",
    "ADAGES_M",
    "fixed_threshold",
    "parse_rule",
    "AggregationOutcome",
    "vote_counts",
    "threshold_select",
    "threshold_sizes",
    "c_upper",
    "complexity_ratio",
    "raw_complexity_ratio",
    "adaptive_threshold",
    "modified_threshold",
    "lambda_bar",
    "kappa_bar",
    "aggregate",
    "aggregate_profile",
    "union_of",
    "intersection_of",
]


class AggregationError(ValueError):
    pass


class DimensionError(AggregationError):
    pass


class DegenerateInputError(AggregationError):
    """Raised when a bound quantity is undefined because a set is empty."""


@dataclass(frozen=True)
class SelectionSet:
    """A subset of the feature indices ``0..d-1``."""

    d: int
    members: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DimensionError(f"dimension must be a positive integer, got {self.d!r}")
        members = frozenset(int(j) for j in self.members)
        for j in members:
            if j < 0 or j >= self.d:
                raise DimensionError(f"index {j} out of range for d={self.d}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "members", members)

    @classmethod
    def from_mask(cls, mask) -> "SelectionSet":
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.size, frozenset(np.flatnonzero(mask).tolist()))

    def size(self) -> int:
        return len(self.members)

    def __len__(self):
        return len(self.members)

    def __contains__(self, j):
        return j in self.members

    def __iter__(self):
        return iter(sorted(self.members))

    def sorted(self) -> list[int]:
        return sorted(self.members)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.d, dtype=bool)
        out[list(self.members)] = True
        return out

    def _check(self, other: "SelectionSet"):
        if other.d != self.d:
            raise DimensionError(f"dimension mismatch: {self.d} != {other.d}")

    def __and__(self, other: "SelectionSet") -> "SelectionSet":
        self._check(other)
        return SelectionSet(self.d, self.members & other.members)

    def __or__(self, other: "SelectionSet") -> "SelectionSet":
        self._check(other)
        return SelectionSet(self.d, self.members | other.members)

    def __sub__(self, other: "SelectionSet") -> "SelectionSet":
        self._check(other)
        return SelectionSet(self.d, self.members - other.members)

    def complement(self) -> "SelectionSet":
        return SelectionSet(self.d, frozenset(range(self.d)) - self.members)

    def issubset(self, other: "SelectionSet") -> bool:
        self._check(other)
        return self.members <= other.members

    def __repr__(self):
        return f"SelectionSet(d={self.d}, {self.sorted()})"


@dataclass(frozen=True)
class VoteProfile:
    """Per-feature vote counts ``m_j`` of ``k`` machines over ``d`` features."""

    d: int
    k: int
    counts: tuple
    machine_sizes: tuple

    def __post_init__(self):
        if self.k < 1:
            raise AggregationError("a vote profile needs at least one machine")
        if len(self.counts) != self.d or len(self.machine_sizes) != self.k:
            raise DimensionError("counts/machine_sizes length does not match d/k")
        if any(m < 0 or m > self.k for m in self.counts):
            raise AggregationError("vote counts must lie in [0, k]")
        if sum(self.counts) != sum(self.machine_sizes):
            raise AggregationError("vote counts do not add up to the machine set sizes")

    @property
    def s_bar(self) -> Fraction:
        return Fraction(sum(self.machine_sizes), self.k)

    @property
    def max_size(self) -> int:
        return max(self.machine_sizes)

    def size_at(self, c: int) -> int:
        """``|S_(c)|``; zero for ``c > k``."""
        return sum(1 for m in self.counts if m >= c)


@dataclass(frozen=True)
class Rule:
    """Aggregation rule tag. ``c`` is only set for fixed thresholds."""

    name: str
    c: int | None = None

    def __str__(self):
        return f"fixed:{self.c}" if self.name == "fixed" else self.name


UNION = Rule("union")
INTERSECTION = Rule("intersection")
MEDIAN = Rule("median")
ADAGES = Rule("adages")
ADAGES_M = Rule("adages_m")

_NAMED = {r.name: r for r in (UNION, INTERSECTION, MEDIAN, ADAGES, ADAGES_M)}


def fixed_threshold(c: int) -> Rule:
    if int(c) != c or c < 1:
        raise AggregationError(f"fixed threshold must be a positive integer, got {c!r}")
    return Rule("fixed", int(c))


def parse_rule(text: str | Rule) -> Rule:
    """Parse ``union``, ``intersection``, ``median``, ``adages``, ``adages_m``
    or ``fixed:<c>``."""
    if isinstance(text, Rule):
        return text
    key = text.strip().lower()
    if key in _NAMED:
        return _NAMED[key]
    if key.startswith("fixed:"):
        return fixed_threshold(int(key.split(":", 1)[1]))
    raise AggregationError(f"unknown aggregation rule {text!r}")


@dataclass(frozen=True)
class AggregationOutcome:
    selected: SelectionSet
    rule: Rule
    threshold_used: int
    c0: int
    eta_table: tuple
    lambda_bar: Fraction | None = None
    kappa_bar: Fraction | None = None


def vote_counts(selections: Sequence[SelectionSet], d: int | None = None) -> VoteProfile:
    if len(selections) == 0:
        raise AggregationError("need at least one selection set")
    if d is None:
        d = selections[0].d
    counts = [0] * d
    for sel in selections:
        if sel.d != d:
            raise DimensionError(f"selection has dimension {sel.d}, expected {d}")
        for j in sel.members:
            counts[j] += 1
    return VoteProfile(d, len(selections), tuple(counts), tuple(len(s) for s in selections))


def _check_c(profile: VoteProfile, c: int):
    if int(c) != c or not 1 <= c <= profile.k:
        raise AggregationError(f"threshold c={c!r} outside [1, {profile.k}]")


def threshold_select(profile: VoteProfile, c: int) -> SelectionSet:
    _check_c(profile, c)
    return SelectionSet(profile.d, frozenset(j for j, m in enumerate(profile.counts) if m >= c))


def threshold_sizes(profile: VoteProfile) -> list[int]:
    """``[|S_(1)|, ..., |S_(k)|, |S_(k+1)| = 0]`` from one pass over the counts."""
    hist = [0] * (profile.k + 2)
    for m in profile.counts:
        hist[m] += 1
    sizes = [0] * (profile.k + 2)
    for c in range(profile.k, 0, -1):
        sizes[c] = sizes[c + 1] + hist[c]
    return sizes[1:]


def c_upper(profile: VoteProfile) -> int:
    sizes = threshold_sizes(profile)
    s_bar = profile.s_bar
    # |S_(1)| >= s_bar always holds, so the max exists
    return max(c for c in range(1, profile.k + 1) if sizes[c - 1] >= s_bar)


def complexity_ratio(profile: VoteProfile, c: int):
    """Surrogate ratio ``(|S_(c)|+1)/(|S_(c+1)|+1)``; ``math.inf`` at ``c = k``."""
    _check_c(profile, c)
    if c == profile.k:
        return math.inf
    return Fraction(profile.size_at(c) + 1, profile.size_at(c + 1) + 1)


def raw_complexity_ratio(profile: VoteProfile, c: int):
    """Unsmoothed ``|S_(c)|/|S_(c+1)|``, diagnostics only. Infinite when the
    denominator is empty; ``nan`` for 0/0."""
    _check_c(profile, c)
    num, den = profile.size_at(c), profile.size_at(c + 1)
    if den == 0:
        return math.nan if num == 0 else math.inf
    return Fraction(num, den)


def _eta_table(profile: VoteProfile, sizes: list[int]) -> tuple:
    k = profile.k
    return tuple(
        Fraction(sizes[c - 1] + 1, sizes[c] + 1) if c < k else math.inf
        for c in range(1, k + 1)
    )


def _argmin_first(values, lo: int, hi: int) -> int:
    best = lo
    for c in range(lo + 1, hi + 1):
        if values[c - 1] < values[best - 1]:
            best = c
    return best


def adaptive_threshold(profile: VoteProfile) -> int:
    """ADAGES threshold: smallest minimiser of the complexity ratio on ``[1, c0]``."""
    sizes = threshold_sizes(profile)
    return _argmin_first(_eta_table(profile, sizes), 1, c_upper(profile))


def modified_threshold(profile: VoteProfile) -> int:
    """Smallest minimiser of ``c * |S_(c)|`` on ``[1, c0]``."""
    sizes = threshold_sizes(profile)
    products = [c * sizes[c - 1] for c in range(1, profile.k + 1)]
    return _argmin_first(products, 1, c_upper(profile))


def lambda_bar(profile: VoteProfile, c_star: int) -> Fraction:
    _check_c(profile, c_star)
    if min(profile.machine_sizes) == 0:
        raise DegenerateInputError("lambda_bar needs every machine set to be nonempty")
    return Fraction(profile.max_size, c_star) * sum(Fraction(1, s) for s in profile.machine_sizes)


def kappa_bar(profile: VoteProfile, intersection_size: int) -> Fraction:
    if intersection_size <= 0:
        raise DegenerateInputError("kappa_bar needs a nonempty intersection")
    return Fraction(profile.max_size, intersection_size)


def _rule_threshold(rule: Rule, profile: VoteProfile) -> int:
    k = profile.k
    if rule.name == "union":
        return 1
    if rule.name == "intersection":
        return k
    if rule.name == "median":
        return (k + 1) // 2
    if rule.name == "fixed":
        _check_c(profile, rule.c)
        return rule.c
    if rule.name == "adages":
        return adaptive_threshold(profile)
    if rule.name == "adages_m":
        return modified_threshold(profile)
    raise AggregationError(f"unknown rule {rule!r}")


def aggregate_profile(profile: VoteProfile, rule: Rule | str) -> AggregationOutcome:
    rule = parse_rule(rule)
    c = _rule_threshold(rule, profile)
    sizes = threshold_sizes(profile)
    lam = None
    if min(profile.machine_sizes) > 0:
        lam = lambda_bar(profile, c)
    kap = None
    if sizes[profile.k - 1] > 0:
        kap = kappa_bar(profile, sizes[profile.k - 1])
    return AggregationOutcome(
        selected=threshold_select(profile, c),
        rule=rule,
        threshold_used=c,
        c0=c_upper(profile),
        eta_table=_eta_table(profile, sizes),
        lambda_bar=lam,
        kappa_bar=kap,
    )


def aggregate(selections: Sequence[SelectionSet], rule: Rule | str) -> AggregationOutcome:
    """Aggregate machine-wise selections under ``rule``.

    ``lambda_bar`` is evaluated at the threshold actually used and is ``None``
    when some machine selected nothing; ``kappa_bar`` is ``None`` when the
    intersection is empty.
    """
    return aggregate_profile(vote_counts(selections), rule)


def union_of(selections: Iterable[SelectionSet]) -> SelectionSet:
    selections = list(selections)
    out = frozenset().union(*(s.members for s in selections))
    return SelectionSet(selections[0].d, out)


def intersection_of(selections: Iterable[SelectionSet]) -> SelectionSet:
    selections = list(selections)
    out = frozenset(selections[0].members).intersection(*(s.members for s in selections[1:]))
    return SelectionSet(selections[0].d, out)
