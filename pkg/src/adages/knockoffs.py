"""Machine-wise feature selection with second-order Gaussian model-X knockoffs.

Pipeline for one shard: estimate moments, equicorrelated ``s``, sample
knockoffs, Lasso coefficient-difference statistics, knockoff+ threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregation import SelectionSet
from .lasso import (
    MAX_DEV,
    MAX_SWEEPS,
    TOL,
    cv_lasso,
    default_grid,
    kfold_ids,
    lasso_path,
    standardize,
)

__all__ = [
    "KnockoffError",
    "DatasetShard",
    "KnockoffModel",
    "WStats",
    "estimate_moments",
    "equicorrelated_s",
    "conditional_covariance",
    "sample_knockoffs",
    "lasso_w_stats",
    "knockoff_plus_threshold",
    "machine_w_stats",
    "machine_select",
]

RIDGE_FLOOR = 1e-6
PSD_TOL = 1e-8


class KnockoffError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetShard:
    X: np.ndarray
    y: np.ndarray
    machine_id: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise KnockoffError(f"shape mismatch: X {X.shape}, y {y.shape}")
        if X.shape[0] < 2:
            raise KnockoffError("a shard needs at least two observations")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise KnockoffError("non-finite entries in shard")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class KnockoffModel:
    mu: np.ndarray
    sigma: np.ndarray
    s: np.ndarray


@dataclass(frozen=True)
class WStats:
    w: np.ndarray
    lambda_used: float


def estimate_moments(X, shrinkage=None, floor=RIDGE_FLOOR):
    """Sample mean and covariance (divisor n-1), made positive definite.

    A ridge ``delta * I`` lifts the smallest eigenvalue to at least
    ``floor * mean(diag)``; zero-variance columns end up at that floor.
    ``shrinkage="ledoit_wolf"`` replaces the sample covariance by the
    Ledoit-Wolf estimate before the floor is applied.

    Returns
    -------
    mu : (d,) ndarray
    sigma : (d, d) ndarray
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise KnockoffError("need a 2-d array with at least two rows")
    if not np.isfinite(X).all():
        raise KnockoffError("non-finite entries in X")
    n, d = X.shape
    mu = X.mean(axis=0)
    if shrinkage is None:
        sigma = np.cov(X, rowvar=False, ddof=1).reshape(d, d)
    elif shrinkage == "ledoit_wolf":
        from sklearn.covariance import ledoit_wolf

        sigma = ledoit_wolf(X)[0] * (n / (n - 1))
    else:
        raise KnockoffError(f"unknown shrinkage {shrinkage!r}")
    sigma = (sigma + sigma.T) / 2
    scale = float(np.mean(np.diag(sigma)))
    target = floor * (scale if scale > 0 else 1.0)
    lo = float(np.linalg.eigvalsh(sigma)[0])
    if lo < target:
        # identical rows give a zero matrix; the floor is then absolute
        sigma = sigma + (target - lo) * np.eye(d)
    return mu, sigma


def _correlation_min_eig(sigma):
    sd = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(sd, sd)
    return float(np.linalg.eigvalsh((corr + corr.T) / 2)[0]), sd


def equicorrelated_s(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise KnockoffError("sigma must be square")
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise KnockoffError("sigma is not symmetric")
    if np.any(np.diag(sigma) <= 0):
        raise KnockoffError("sigma is not positive definite")
    lam_min, sd = _correlation_min_eig(sigma)
    if lam_min <= 0:
        raise KnockoffError(f"sigma is not positive definite (min eigenvalue {lam_min:.3g})")
    return min(1.0, 2.0 * lam_min) * sd ** 2


def conditional_covariance(sigma, s):
    """``2 diag(s) - diag(s) sigma^-1 diag(s)``."""
    D = np.diag(s)
    out = 2 * D - D @ np.linalg.solve(sigma, D)
    return (out + out.T) / 2


def _psd_sqrt(V):
    vals, vecs = np.linalg.eigh(V)
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals[0] < -PSD_TOL * scale:
        raise KnockoffError(f"knockoff conditional covariance is not PSD (eigenvalue {vals[0]:.3g})")
    return vecs * np.sqrt(np.clip(vals, 0, None))


def sample_knockoffs(X, model: KnockoffModel, rng):
    """Draw Gaussian knockoffs row by row from the conditional law given ``X``."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if model.mu.shape != (d,) or model.sigma.shape != (d, d) or model.s.shape != (d,):
        raise KnockoffError("knockoff model does not match the dimension of X")
    s = np.asarray(model.s, dtype=float)
    if np.any(s < 0):
        raise KnockoffError("s must be nonnegative")
    shift = np.linalg.solve(model.sigma, np.diag(s))  # sigma^-1 diag(s)
    mean = X - (X - model.mu) @ shift
    root = _psd_sqrt(conditional_covariance(model.sigma, s))
    noise = rng.standard_normal((n, d))
    return mean + noise @ root.T


def lasso_w_stats(X, Xk, y, lambda_grid=None, n_folds=5, folds=None, rng=None,
                  tol=TOL, max_sweeps=MAX_SWEEPS, max_dev=MAX_DEV, lambda_rule="min") -> WStats:
    """Lasso coefficient difference ``|b_j| - |b_{j+d}|`` on ``[X, Xk]``.

    Columns of the augmented design are standardised. With a single-value
    ``lambda_grid`` the fit is done at that value without cross-validation.
    Fold labels come from ``folds`` if given, else from ``rng`` (shuffled) or
    contiguous blocks.
    """
    X = np.asarray(X, dtype=float)
    Xk = np.asarray(Xk, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if Xk.shape != (n, d) or y.size != n:
        raise KnockoffError("X, knockoffs and y do not agree in shape")
    Z = standardize(np.hstack([X, Xk]))
    yc = y - y.mean()
    if lambda_grid is None:
        lambda_grid = default_grid(Z, yc)
    grid = np.asarray(lambda_grid, dtype=float).ravel()
    if grid.size == 0:
        raise KnockoffError("empty lambda grid")
    if np.any(np.diff(grid) > 0):
        raise KnockoffError("lambda grid must be decreasing")
    if not np.any(yc):
        return WStats(np.zeros(d), float(grid[0]))
    if grid.size == 1:
        lam = float(grid[0])
    else:
        if folds is None:
            folds = kfold_ids(n, n_folds, rng)
        lam, _ = cv_lasso(Z, yc, grid, np.asarray(folds), tol, max_sweeps, max_dev,
                          rule=lambda_rule)
    path = lasso_path(Z, yc, grid[grid >= lam], tol, max_sweeps, max_dev=max_dev)
    beta = path[-1]
    return WStats(np.abs(beta[:d]) - np.abs(beta[d:]), float(lam))


def knockoff_plus_threshold(w, q):
    """Knockoff+ data-dependent threshold.

    Returns ``(T, selected)``; ``T`` is ``math.inf`` and nothing is selected
    when no candidate threshold reaches level ``q``.
    """
    if not 0 < q < 1:
        raise KnockoffError(f"q must lie in (0, 1), got {q!r}")
    w = np.asarray(w.w if isinstance(w, WStats) else w, dtype=float)
    d = w.size
    for t in np.unique(np.abs(w[w != 0])):
        ratio = (1 + np.count_nonzero(w <= -t)) / max(1, np.count_nonzero(w >= t))
        if ratio <= q:
            return float(t), SelectionSet.from_mask(w >= t)
    return math.inf, SelectionSet(d)


def machine_w_stats(shard: DatasetShard, rng, shrinkage=None, lambda_grid=None,
                    n_folds=5, lambda_rule="min") -> WStats:
    """Knockoff statistics of one shard; thresholding is left to the caller."""
    mu, sigma = estimate_moments(shard.X, shrinkage=shrinkage)
    model = KnockoffModel(mu, sigma, equicorrelated_s(sigma))
    Xk = sample_knockoffs(shard.X, model, rng)
    return lasso_w_stats(shard.X, Xk, shard.y, lambda_grid=lambda_grid,
                         n_folds=n_folds, rng=rng, lambda_rule=lambda_rule)


def machine_select(shard: DatasetShard, q, rng, shrinkage=None) -> SelectionSet:
    return knockoff_plus_threshold(machine_w_stats(shard, rng, shrinkage=shrinkage), q)[1]
