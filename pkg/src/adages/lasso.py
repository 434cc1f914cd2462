"""Lasso by cyclic coordinate descent with K-fold cross-validation.

Objective, on an already standardised design ``Z`` and centred response::

    (1 / 2n) * ||y - Z b||^2 + lam * ||b||_1

The inner loop runs on the Gram matrix ``G = Z'Z / n`` and keeps the gradient
vector ``g = Z'y / n - G b`` up to date, which costs O(p) per nonzero update.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TOL = 1e-7
MAX_SWEEPS = 10_000
# stop a path once the fit explains this fraction of ||y||^2
MAX_DEV = 0.999


class LassoConvergenceError(RuntimeError):
    def __init__(self, lam, max_change, sweeps):
        super().__init__(
            f"coordinate descent did not converge at lambda={lam:.3g} after "
            f"{sweeps} sweeps (last max coefficient change {max_change:.3g})"
        )
        self.lam = lam
        self.max_change = max_change
        self.sweeps = sweeps


@njit(cache=True)
def _sweep(G, g, beta, lam, idx, m):
    # one cyclic pass over idx[:m]; returns the largest coefficient change
    max_change = 0.0
    p = beta.shape[0]
    for t in range(m):
        j = idx[t]
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        old = beta[j]
        z = g[j] + gjj * old
        if z > lam:
            new = (z - lam) / gjj
        elif z < -lam:
            new = (z + lam) / gjj
        else:
            new = 0.0
        if new != old:
            delta = new - old
            beta[j] = new
            for i in range(p):
                g[i] -= G[i, j] * delta
            if abs(delta) > max_change:
                max_change = abs(delta)
    return max_change


@njit(cache=True)
def _cd_path(G, g, yy, lambdas, beta, tol, max_sweeps, path, max_dev):
    # beta and g are updated in place; path[l] receives the solution at lambdas[l].
    # Full sweeps alternate with passes over the active set only; the stopping
    # test is always a full sweep with largest change below tol, and only full
    # sweeps count against max_sweeps.
    # Returns (failing lambda index or -1, last max change, number of lambdas fitted).
    p = beta.shape[0]
    everything = np.arange(p)
    active = np.empty(p, dtype=np.int64)
    for l in range(lambdas.shape[0]):
        lam = lambdas[l]
        sweeps = 0
        converged = False
        change = 0.0
        while sweeps < max_sweeps:
            change = _sweep(G, g, beta, lam, everything, p)
            sweeps += 1
            if change < tol:
                converged = True
                break
            m = 0
            for j in range(p):
                if beta[j] != 0.0:
                    active[m] = j
                    m += 1
            for _ in range(max_sweeps):
                if _sweep(G, g, beta, lam, active, m) < tol:
                    break
        if not converged:
            return l, change, l
        path[l, :] = beta
        if max_dev < 1.0 and yy > 0.0:
            # fraction of the null deviance explained: 1 - ||y - Zb||^2 / ||y||^2
            # with ||y - Zb||^2 / n = yy - 2 b'(Z'y/n) + b'Gb and Z'y/n = g + Gb
            gb = 0.0
            bgb = 0.0
            for j in range(p):
                if beta[j] != 0.0:
                    gb += beta[j] * g[j]
                    for i in range(p):
                        bgb += beta[j] * G[j, i] * beta[i]
            rss = yy - 2.0 * (gb + bgb) + bgb
            if 1.0 - rss / yy > max_dev:
                return -1, 0.0, l + 1
    return -1, 0.0, lambdas.shape[0]


def lasso_path(Z, y, lambdas, tol=TOL, max_sweeps=MAX_SWEEPS, beta0=None, max_dev=1.0):
    """Warm-started solutions for each value of a decreasing ``lambdas`` grid.

    ``Z`` and ``y`` are used as given (no centring or scaling here). With
    ``max_dev < 1`` the path stops early once the fit explains more than that
    fraction of ``||y||^2``; the returned array then has fewer rows than
    ``lambdas``.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = Z.shape
    lambdas = np.ascontiguousarray(lambdas, dtype=float)
    G = np.ascontiguousarray(Z.T @ Z / n)
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    g = Z.T @ y / n - G @ beta
    path = np.zeros((lambdas.size, p))
    bad, change, fitted = _cd_path(G, g, float(y @ y) / n, lambdas, beta, tol,
                                   max_sweeps, path, max_dev)
    if bad >= 0:
        raise LassoConvergenceError(lambdas[bad], change, max_sweeps)
    return path[:fitted]


def objective(Z, y, beta, lam):
    r = y - Z @ beta
    return 0.5 * r @ r / len(y) + lam * np.abs(beta).sum()


def kkt_violation(Z, y, beta, lam):
    """Largest violation of the Lasso optimality conditions at ``beta``."""
    grad = Z.T @ (y - Z @ beta) / len(y)
    active = beta != 0
    viol = np.zeros_like(grad)
    viol[active] = np.abs(grad[active] - lam * np.sign(beta[active]))
    viol[~active] = np.maximum(np.abs(grad[~active]) - lam, 0.0)
    return float(viol.max(initial=0.0))


def standardize(A):
    """Centre columns and scale them to unit (population) variance.

    Constant columns are left at zero so the solver never moves them.
    """
    A = np.asarray(A, dtype=float)
    mu = A.mean(axis=0)
    sd = A.std(axis=0)
    Z = A - mu
    ok = sd > 1e-12 * max(1.0, float(np.abs(A).max(initial=0.0)))
    Z[:, ok] /= sd[ok]
    Z[:, ~ok] = 0.0
    return Z


def lambda_max(Z, y):
    return float(np.abs(Z.T @ y).max(initial=0.0)) / len(y)


def default_grid(Z, y, n_lambdas=50, ratio=None):
    """Geometric grid from ``lambda_max`` down to ``ratio * lambda_max``.

    ``ratio`` defaults to 1e-3, or 1e-2 when there are at least as many
    columns as rows.
    """
    top = lambda_max(Z, y)
    if top <= 0:
        return np.array([1.0])
    if ratio is None:
        n, p = np.shape(Z)
        ratio = 1e-3 if n > p else 1e-2
    return top * np.geomspace(1.0, ratio, n_lambdas)


def kfold_ids(n, n_folds, rng=None):
    """Fold label per row. Contiguous blocks without ``rng``, shuffled otherwise."""
    ids = np.arange(n) % n_folds
    ids.sort()
    if rng is not None:
        ids = rng.permutation(ids)
    return ids


def cv_lasso(Z, y, lambdas, folds, tol=TOL, max_sweeps=MAX_SWEEPS, max_dev=MAX_DEV,
             rule="min"):
    """Choose a grid value by K-fold cross-validated squared error.

    ``folds`` is a per-row fold label. Each training split is re-centred so
    the held-out predictions carry the training intercept. Only the grid
    prefix reached by every fold (see ``max_dev`` in ``lasso_path``) competes.
    ``rule="min"`` takes the smallest mean error, ``rule="1se"`` the largest
    value within one standard error of it.

    Returns the chosen value and the mean error per grid value.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    labels = np.unique(folds)
    err = np.zeros((labels.size, lambdas.size))
    reached = lambdas.size
    for i, f in enumerate(labels):
        test = folds == f
        Ztr, ytr = Z[~test], y[~test]
        zbar, ybar = Ztr.mean(axis=0), ytr.mean()
        path = lasso_path(Ztr - zbar, ytr - ybar, lambdas, tol, max_sweeps, max_dev=max_dev)
        reached = min(reached, len(path))
        resid = (y[test] - ybar)[None, :] - path @ (Z[test] - zbar).T
        err[i, : len(path)] = (resid ** 2).mean(axis=1)
    err = err[:, :reached]
    mean = err.mean(axis=0)
    best = int(np.argmin(mean))
    if rule == "1se" and labels.size > 1:
        se = err[:, best].std(ddof=1) / np.sqrt(labels.size)
        best = int(np.flatnonzero(mean <= mean[best] + se)[0])
    elif rule not in ("min", "1se"):
        raise ValueError(f"unknown lambda rule {rule!r}")
    return lambdas[best], mean
