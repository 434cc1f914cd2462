"""Monte-Carlo sweeps over the number of machines or the dimension.

Each trial draws a fresh instance, splits it over ``k`` machines, runs the
knockoff selector on every shard and aggregates the machine-wise sets under
each configured method. Trial and summary tables are written as CSV.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .aggregation import (
    SelectionSet,
    aggregate_profile,
    vote_counts,
)
from .datagen import LinearModelSpec, gen_instance, partition
from .knockoffs import KnockoffError, knockoff_plus_threshold, machine_w_stats
from .lasso import LassoConvergenceError
from .metrics import (
    TrialRecord,
    intersection_bound_holds,
    lemma1_count_holds,
    lemma1_holds,
    summarize_rows,
    theorem2_bound_holds,
    threshold_count_holds,
    union_bound_holds,
)

log = logging.getLogger(__name__)

__all__ = [
    "METHODS",
    "TRIAL_COLUMNS",
    "SUMMARY_COLUMNS",
    "MACHINE_COLUMNS",
    "APPENDIX_CASES",
    "ExperimentConfig",
    "InvariantViolation",
    "SweepResult",
    "trial_seed",
    "run_trial",
    "run_sweep",
    "run_appendix_cases",
    "write_csv",
    "read_csv",
]

METHODS = ("union", "intersection", "median", "adages", "adages_m", "xie_split")
TRIAL_COLUMNS = ("method", "k", "d", "n", "s", "rep", "seed", "fdp", "power",
                 "c_star", "c0", "agg_size", "failures")
SUMMARY_COLUMNS = ("method", "k", "d", "mean_fdp", "mean_power", "reps", "c_star_min",
                   "c_star_q25", "c_star_med", "c_star_q75", "c_star_max")
MACHINE_COLUMNS = ("k", "d", "n", "rep", "seed", "machine_id", "n_i", "size", "fdp", "power")
APPENDIX_CASES = ((5, 20), (5, 80), (10, 20), (10, 80))


class InvariantViolation(AssertionError):
    def __init__(self, name, seed, detail=""):
        super().__init__(f"{name} violated in trial with seed {seed}{': ' + detail if detail else ''}")
        self.name = name
        self.seed = seed


@dataclass
class ExperimentConfig:
    base: LinearModelSpec = field(default_factory=LinearModelSpec)
    sweep: str = "k"
    values: list = field(default_factory=lambda: [1, 2, 5, 8, 10, 20])
    methods: list = field(default_factory=lambda: list(METHODS))
    q: float = 0.2
    reps: int = 100
    seed: int = 0
    output: str | None = None
    workers: int = 1
    shrinkage: str | None = "ledoit_wolf"
    strict_lemma1: bool = False

    def __post_init__(self):
        if isinstance(self.base, dict):
            self.base = LinearModelSpec(**self.base)
        if self.sweep not in ("k", "d"):
            raise ValueError(f"sweep must be 'k' or 'd', got {self.sweep!r}")
        if not self.values:
            raise ValueError("sweep values must be nonempty")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    def spec_for(self, value) -> LinearModelSpec:
        return replace(self.base, **{self.sweep: int(value)})


def trial_seed(base_seed, value, rep) -> int:
    """Stable per-trial seed from (base seed, sweep value, rep)."""
    return int(np.random.SeedSequence([int(base_seed), int(value), int(rep)]).generate_state(1)[0])


@dataclass
class SweepResult:
    records: list
    rows: list
    summaries: list
    machine_rows: list = field(default_factory=list)
    checks: Counter = field(default_factory=Counter)

    def summary_rows(self):
        return [s.row() for s in self.summaries]


def _check_trial(rec: TrialRecord, profile, checks: Counter, strict_lemma1: bool):
    truth, sets, seed = rec.truth, rec.machine_sets, rec.seed
    nulls = truth.complement()
    for name, out in rec.outcomes.items():
        if name == "xie_split":
            continue
        c = out.threshold_used
        for part in (nulls, truth):
            if not threshold_count_holds(profile, c, part):
                raise InvariantViolation("threshold count inequality", seed, name)
        if not lemma1_count_holds(profile, c, out.selected, truth):
            raise InvariantViolation("true-vote split", seed, name)
    if "union" in rec.outcomes and not union_bound_holds(sets, rec.outcomes["union"].selected, truth):
        raise InvariantViolation("union count bound", seed)
    if "intersection" in rec.outcomes and not intersection_bound_holds(
            sets, rec.outcomes["intersection"].selected, truth):
        raise InvariantViolation("intersection count bound", seed)
    if "adages" in rec.outcomes:
        out = rec.outcomes["adages"]
        checks["lemma1_trials"] += 1
        if not lemma1_holds(profile, out.threshold_used, out.selected, truth):
            checks["lemma1_violations"] += 1
            if strict_lemma1:
                raise InvariantViolation("stated power-shrinkage lemma", seed)
        t2 = theorem2_bound_holds(out.threshold_used, out.selected, truth, sets)
        if t2 is not None:
            checks["theorem2_trials"] += 1
            checks["theorem2_violations"] += int(not t2)


def run_trial(spec: LinearModelSpec, methods, q, rep, seed, shrinkage="ledoit_wolf",
              sweep_value=None, strict_lemma1=False):
    """One repetition. Returns ``(record, machine_rows, checks)``.

    Selector failures produce a record with ``failed=True`` and no outcomes.
    """
    checks = Counter()
    children = np.random.SeedSequence(seed).spawn(spec.k + 1)
    X, y, gt = gen_instance(spec, np.random.default_rng(children[0]))
    truth = gt.support
    meta = dict(k=spec.k, d=spec.d, n=spec.n, s=spec.s, rep=rep, seed=seed,
                sweep_value=sweep_value, beta=gt.beta)
    shards = partition(X, y, spec.k)
    try:
        stats = [machine_w_stats(sh, np.random.default_rng(ch), shrinkage=shrinkage)
                 for sh, ch in zip(shards, children[1:])]
    except (KnockoffError, LassoConvergenceError) as exc:
        log.warning("trial seed=%d failed: %s", seed, exc)
        rec = TrialRecord(truth=truth, machine_sets=[], outcomes={}, failed=True,
                          failed_methods=list(methods), **meta)
        checks["failed_trials"] += 1
        return rec, [], checks
    sets = [knockoff_plus_threshold(w, q)[1] for w in stats]
    profile = vote_counts(sets)
    outcomes = {m: aggregate_profile(profile, m) for m in methods if m != "xie_split"}
    if "xie_split" in methods:
        split = [knockoff_plus_threshold(w, q / spec.k)[1] for w in stats]
        outcomes["xie_split"] = aggregate_profile(vote_counts(split), "union")
    outcomes = {m: outcomes[m] for m in methods}
    rec = TrialRecord.build(truth, sets, outcomes, **meta)
    _check_trial(rec, profile, checks, strict_lemma1)
    machine_rows = [
        {"k": spec.k, "d": spec.d, "n": spec.n, "rep": rep, "seed": seed, "machine_id": i,
         "n_i": sh.n, "size": sets[i].size(), "fdp": rec.machine_fdp[i], "power": rec.machine_tpp[i]}
        for i, sh in enumerate(shards)
    ]
    return rec, machine_rows, checks


def _failed_rows(rec: TrialRecord):
    nan = float("nan")
    return [{"method": m, "k": rec.k, "d": rec.d, "n": rec.n, "s": rec.s, "rep": rec.rep,
             "seed": rec.seed, "fdp": nan, "power": nan, "c_star": nan, "c0": nan,
             "agg_size": nan, "failures": 1} for m in rec.failed_methods]


def _trial_job(args):
    return run_trial(*args[:5], shrinkage=args[5], sweep_value=args[6], strict_lemma1=args[7])


def _collect(jobs, workers):
    if workers <= 1:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so output does not depend on scheduling
        return list(pool.map(_trial_job, jobs, chunksize=1))


def _assemble(results) -> SweepResult:
    records, rows, machine_rows, checks = [], [], [], Counter()
    for rec, mrows, chk in results:
        records.append(rec)
        rows.extend(_failed_rows(rec) if rec.failed else rec.rows())
        machine_rows.extend(mrows)
        checks.update(chk)
    return SweepResult(records, rows, summarize_rows(rows), machine_rows, checks)


def run_sweep(config: ExperimentConfig) -> SweepResult:
    jobs = []
    for value in config.values:
        spec = config.spec_for(value)
        for rep in range(config.reps):
            seed = trial_seed(config.seed, value, rep)
            jobs.append((spec, list(config.methods), config.q, rep, seed,
                         config.shrinkage, value, config.strict_lemma1))
    result = _assemble(_collect(jobs, config.workers))
    if config.output:
        out = Path(config.output)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "trials.csv", result.rows, TRIAL_COLUMNS)
        write_csv(out / "summary.csv", result.summary_rows(), SUMMARY_COLUMNS)
    return result


def run_appendix_cases(q=0.2, cases=APPENDIX_CASES, reps=100, seed=0, output=None,
                       workers=1, n=1000, s=10, rho=0.25, amplitude=2.0, methods=METHODS,
                       shrinkage="ledoit_wolf") -> SweepResult:
    """Machine-wise and aggregated results for the four illustration cases.

    ``cases`` is a list of ``(k, d)`` pairs drawn from ``APPENDIX_CASES``.
    Writes ``trials.csv``, ``summary.csv`` and ``machines.csv`` to ``output``.
    """
    cases = [tuple(c) for c in cases]
    if not cases:
        raise ValueError("no appendix cases given")
    bad = [c for c in cases if c not in APPENDIX_CASES]
    if bad:
        raise ValueError(f"unsupported cases {bad}; choose from {list(APPENDIX_CASES)}")
    jobs = []
    for k, d in cases:
        spec = LinearModelSpec(n=n, d=d, s=s, rho=rho, amplitude=amplitude, k=k)
        for rep in range(reps):
            # k and d packed into the sweep value keep case seeds apart
            tseed = trial_seed(seed, 1000 * k + d, rep)
            jobs.append((spec, list(methods), q, rep, tseed, shrinkage, None, False))
    result = _assemble(_collect(jobs, workers))
    if output:
        out = Path(output)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "trials.csv", result.rows, TRIAL_COLUMNS)
        write_csv(out / "summary.csv", result.summary_rows(), SUMMARY_COLUMNS)
        write_csv(out / "machines.csv", result.machine_rows, MACHINE_COLUMNS)
    return result


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def write_csv(path, rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])
    data = buf.getvalue()
    if path is not None:
        Path(path).write_text(data)
    return data


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        if r.get("failures") == "":
            r["failures"] = "0"
    return rows
