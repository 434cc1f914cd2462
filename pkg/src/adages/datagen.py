"""Synthetic sparse linear model with an AR(1) Gaussian design."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .aggregation import SelectionSet
from .knockoffs import DatasetShard

__all__ = [
    "LinearModelSpec",
    "GroundTruth",
    "ar1_covariance",
    "ar1_design",
    "gen_instance",
    "partition",
    "shard_sizes",
    "write_instance_csv",
]


@dataclass(frozen=True)
class LinearModelSpec:
    n: int = 1000
    d: int = 50
    s: int = 20
    rho: float = 0.25
    amplitude: float = 2.0
    k: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not 1 <= self.s <= self.d:
            raise ValueError(f"need 1 <= s <= d, got s={self.s}, d={self.d}")
        if self.k < 1 or self.n < self.k:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")


@dataclass(frozen=True)
class GroundTruth:
    beta: np.ndarray
    support: SelectionSet


def ar1_covariance(d, rho):
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def ar1_design(n, d, rho, rng):
    """Rows i.i.d. N(0, Sigma) with Sigma_ls = rho^|l-s|, via the AR(1) recursion."""
    z = rng.standard_normal((n, d))
    X = np.empty_like(z)
    X[:, 0] = z[:, 0]
    innov = np.sqrt(1 - rho ** 2)
    for l in range(1, d):
        X[:, l] = rho * X[:, l - 1] + innov * z[:, l]
    return X


def gen_instance(spec: LinearModelSpec, rng=None):
    """Draw ``(X, y, truth)``. Uses ``default_rng(spec.seed)`` when no rng is given."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    X = ar1_design(spec.n, spec.d, spec.rho, rng)
    support = np.sort(rng.choice(spec.d, size=spec.s, replace=False))
    signs = rng.choice([-1.0, 1.0], size=spec.s)
    beta = np.zeros(spec.d)
    beta[support] = spec.amplitude * signs
    y = X @ beta + rng.standard_normal(spec.n)
    truth = GroundTruth(beta, SelectionSet(spec.d, frozenset(support.tolist())))
    return X, y, truth


def shard_sizes(n, k):
    if k < 1 or k > n:
        raise ValueError(f"cannot split {n} rows over {k} machines")
    base, extra = divmod(n, k)
    return [base + (i < extra) for i in range(k)]


def partition(X, y, k):
    """Contiguous row blocks; the first ``n mod k`` shards get one extra row."""
    bounds = np.cumsum([0] + shard_sizes(len(y), k))
    return [
        DatasetShard(X[a:b], y[a:b], machine_id=i)
        for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]))
    ]


def write_instance_csv(path, X, y):
    """Header ``x0..x{d-1},y`` then one row per observation."""
    X = np.asarray(X)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(X.shape[1])] + ["y"])
        for row, target in zip(X, y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
