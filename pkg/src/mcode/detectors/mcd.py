"""FAST-MCD robust location/scatter and robust Mahalanobis distances."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from ..errors import ArgumentError

_logger = logging.getLogger(__name__)

RIDGE = 1e-8
DET_TOL = 1e-12
N_STARTS = 500
N_BEST = 10
MAX_CSTEPS = 200


@dataclass(frozen=True)
class RobustEstimate:
    location: np.ndarray
    scatter: np.ndarray
    support: np.ndarray
    determinant: float
    raw_location: np.ndarray = None
    consistency: float = 1.0
    log_determinant: float = -np.inf

    @property
    def h(self) -> int:
        return len(self.support)


def default_h(n: int, d: int) -> int:
    return (n + d + 1) // 2


def _logdet_cov(X: np.ndarray, idx: np.ndarray, ridge: float = 0.0):
    sub = X[idx]
    mu = sub.mean(axis=0)
    C = np.cov(sub, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
    if ridge:
        C[np.diag_indices_from(C)] += ridge
    sign, logdet = np.linalg.slogdet(C)
    if sign <= 0:
        logdet = -np.inf
    return mu, C, logdet


def _mahalanobis_sq(X, mu, C):
    diff = X - mu
    try:
        L = linalg.cholesky(C, lower=True)
    except linalg.LinAlgError:
        return np.einsum("ij,jk,ik->i", diff, np.linalg.pinv(C), diff)
    z = linalg.solve_triangular(L, diff.T, lower=True)
    return np.einsum("ij,ij->j", z, z)


def csteps(X, idx, h, max_steps=MAX_CSTEPS, tol=DET_TOL, trace=None, ridge=0.0):
    """Iterate concentration steps from subset ``idx`` until the determinant settles.

    Returns ``(idx, mu, C, logdet, steps)``; ``trace`` (a list) receives each
    successive log-determinant when given.
    """
    mu, C, logdet = _logdet_cov(X, idx, ridge)
    if trace is not None:
        trace.append(logdet)
    steps = 0
    while steps < max_steps and np.isfinite(logdet):
        dist = _mahalanobis_sq(X, mu, C)
        new_idx = np.sort(np.argsort(dist, kind="stable")[:h])
        new_mu, new_C, new_logdet = _logdet_cov(X, new_idx, ridge)
        steps += 1
        if new_logdet > logdet:
            # a C-step cannot increase the determinant; only round-off gets here
            break
        if trace is not None:
            trace.append(new_logdet)
        converged = np.array_equal(new_idx, idx) or (logdet - new_logdet) < tol
        idx, mu, C, logdet = new_idx, new_mu, new_C, new_logdet
        if converged:
            break
    return idx, mu, C, logdet, steps


def _initial_subset(X, h, rng, ridge=0.0):
    n, d = X.shape
    perm = rng.permutation(n)
    size = d + 1
    idx = np.sort(perm[:size])
    # grow the elemental subset until its covariance is nonsingular
    while size < n:
        _, C, logdet = _logdet_cov(X, idx, ridge)
        if np.isfinite(logdet):
            break
        size += 1
        idx = np.sort(perm[:size])
    mu, C, logdet = _logdet_cov(X, idx, ridge)
    if not np.isfinite(logdet):
        return idx[:h] if len(idx) >= h else np.sort(perm[:h])
    dist = _mahalanobis_sq(X, mu, C)
    return np.sort(np.argsort(dist, kind="stable")[:h])


def consistency_factor(h: int, n: int, d: int) -> float:
    """Chi-square correction making the h-subset scatter consistent at the normal."""
    if h >= n:
        return 1.0
    q = stats.chi2.ppf(h / n, d)
    return float((h / n) / stats.chi2.cdf(q, d + 2))


def _ridge(C):
    d = C.shape[0]
    tr = np.trace(C)
    eps = RIDGE * tr / d if tr > 0 else RIDGE
    return C + eps * np.eye(d)


def fast_mcd(points, h: int | None = None, n_starts: int = N_STARTS, seed: int = 0, n_best: int = N_BEST) -> RobustEstimate:
    """Minimum covariance determinant estimate by random starts plus C-steps.

    Each of ``n_starts`` random (d+1)-subsets is expanded to ``h`` points and
    given two concentration steps; the ``n_best`` lowest-determinant
    candidates are then iterated to convergence and the best one is kept.
    The returned scatter is the support covariance multiplied by the
    chi-square consistency factor with a ``1e-8 * trace / d`` ridge added.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ArgumentError("points must be a 2-D matrix")
    n, d = X.shape
    if n <= d:
        raise ArgumentError(f"fast_mcd needs n > d (got n={n}, d={d})")
    h = default_h(n, d) if h is None else int(h)
    if not default_h(n, d) <= h <= n:
        raise ArgumentError(f"h={h} outside [{default_h(n, d)}, {n}]")

    if np.all(X == X[0]):
        C = RIDGE * np.eye(d)
        return RobustEstimate(X[0].copy(), C, np.arange(h), 0.0, X[0].copy(), 1.0, -np.inf)

    if h == n:
        idx = np.arange(n)
        mu, C, logdet = _logdet_cov(X, idx)
        return RobustEstimate(mu, _ridge(C), idx, float(np.exp(logdet)), mu, 1.0, float(logdet))

    # rank-deficient data: every subset is singular, so compare ridge-regularized determinants
    full = np.cov(X, rowvar=False).reshape(d, d)
    ridge = 0.0
    if np.linalg.slogdet(full)[0] <= 0:
        ridge = RIDGE * np.trace(full) / d
        _logger.info("data covariance is singular; using ridge %.3g in the MCD objective", ridge)

    rng = np.random.default_rng(seed)
    candidates = {}
    for _ in range(n_starts):
        idx = _initial_subset(X, h, rng, ridge)
        idx, _, _, logdet, _ = csteps(X, idx, h, max_steps=2, ridge=ridge)
        key = idx.tobytes()
        if key not in candidates:
            candidates[key] = (logdet, idx)
        if logdet == -np.inf:
            break
    ranked = sorted(candidates.values(), key=lambda c: c[0])[:n_best]
    best = None
    for _, idx in ranked:
        idx, mu, C, logdet, _ = csteps(X, idx, h, ridge=ridge)
        if best is None or logdet < best[3]:
            best = (idx, mu, C, logdet)
    idx, mu, C, logdet = best
    if ridge:
        C = C - ridge * np.eye(d)
    if not np.isfinite(logdet):
        _logger.info("exact fit: %d points lie on a hyperplane", h)
    factor = consistency_factor(h, n, d)
    return RobustEstimate(mu, _ridge(C * factor), idx, float(np.exp(logdet)), mu, factor, float(logdet))


def robust_distance_sq(est: RobustEstimate, point, location=None) -> np.ndarray | float:
    """Squared Mahalanobis distance(s) of ``point`` (vector or rows) under ``est``."""
    P = np.asarray(point, dtype=float)
    d = est.scatter.shape[0]
    if P.shape[-1] != d:
        raise ArgumentError(f"point has {P.shape[-1]} coordinates, estimate has {d}")
    mu = est.location if location is None else np.asarray(location, dtype=float)
    single = P.ndim == 1
    out = np.maximum(_mahalanobis_sq(np.atleast_2d(P), mu, est.scatter), 0.0)
    return float(out[0]) if single else out
