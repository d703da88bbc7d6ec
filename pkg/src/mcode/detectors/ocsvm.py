"""One-class SVM with an RBF kernel, trained on the dual by pairwise updates."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..errors import ArgumentError, ConvergenceError
from .lof import pairwise_distances

_logger = logging.getLogger(__name__)

KKT_TOL = 1e-3  # largest violation accepted at the update cap
SOLVER_TOL = 1e-6  # target violation; decision values often span only ~1e-2
_TAU = 1e-12


@dataclass(frozen=True)
class OcsvmModel:
    support_points: np.ndarray
    alphas: np.ndarray
    offset: float
    gamma: float
    nu: float
    n_train: int
    n_iter: int = 0
    violation: float = 0.0

    @property
    def n_support(self) -> int:
        return len(self.alphas)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] <= 64:
        sq = cdist(A, B, "sqeuclidean")
    else:
        sq = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def median_gamma(points, max_points: int = 1000, seed: int = 0) -> float:
    """Bandwidth ``1 / (2 med^2)`` from the median pairwise distance of a sample."""
    X = np.asarray(points, dtype=float)
    if len(X) > max_points:
        X = X[np.random.default_rng(seed).choice(len(X), max_points, replace=False)]
    if len(X) < 2:
        return 1.0
    dist = pdist(X)
    med = np.median(dist)
    if med <= 0:
        positive = dist[dist > 0]
        if positive.size == 0:
            return 1.0
        med = np.median(positive)
    return float(1.0 / (2.0 * med * med))


def _kernel_matrix(X: np.ndarray, gamma: float) -> np.ndarray:
    D = pairwise_distances(X)
    return np.exp(-gamma * D * D)


def dual_objective(alpha: np.ndarray, Q: np.ndarray) -> float:
    return float(0.5 * alpha @ Q @ alpha)


def solve_dual(Q: np.ndarray, C: float, tol: float = SOLVER_TOL, max_iter: int | None = None,
               history: list | None = None, accept: float = KKT_TOL):
    """Minimize ``0.5 a'Qa`` over ``0 <= a <= C``, ``sum(a) = 1``.

    Each update moves mass between the maximal violating pair: the index
    with the smallest gradient that can still grow, and the one with the
    largest gradient that can still shrink. Iteration stops once the
    violation is at most ``tol``. Reaching ``max_iter`` (default ``100 n``)
    is fine as long as the violation is at most ``accept``; otherwise a
    ConvergenceError is raised.

    Returns ``(alpha, grad, n_iter, violation)``.
    """
    n = Q.shape[0]
    max_iter = 100 * n if max_iter is None else max_iter
    alpha = np.zeros(n)
    full = min(int(np.floor(1.0 / C + 1e-12)), n)
    alpha[:full] = C
    if full < n:
        alpha[full] = max(1.0 - full * C, 0.0)
    G = Q @ alpha
    if history is not None:
        history.append(0.5 * alpha @ G)

    it = 0
    violation = np.inf
    while True:
        up = alpha < C
        low = alpha > 0
        i = np.flatnonzero(up)[np.argmin(G[up])]
        j = np.flatnonzero(low)[np.argmax(G[low])]
        violation = G[j] - G[i]
        if violation <= tol:
            break
        if it >= max_iter:
            if violation <= max(accept, tol):
                _logger.debug("dual solver stopped at the cap with violation %.3g", violation)
                break
            raise ConvergenceError(
                f"dual solver stopped after {it} updates with KKT violation {violation:.3g}",
                violation=float(violation),
            )
        eta = max(Q[i, i] + Q[j, j] - 2.0 * Q[i, j], _TAU)
        delta = min(violation / eta, C - alpha[i], alpha[j])
        alpha[i] += delta
        alpha[j] -= delta
        # snap round-off at the bounds
        if C - alpha[i] < 1e-15 * C:
            alpha[i] = C
        if alpha[j] < 1e-15 * C:
            alpha[j] = 0.0
        G += delta * (Q[:, i] - Q[:, j])
        it += 1
        if history is not None:
            history.append(0.5 * alpha @ G)
    return alpha, G, it, float(violation)


def _offset(alpha, G, C):
    free = (alpha > 1e-12 * C) & (alpha < C * (1 - 1e-12))
    if free.any():
        return float(G[free].mean())
    at_upper = alpha >= C * (1 - 1e-12)
    at_zero = ~at_upper & ~free
    hi = G[at_zero].min() if at_zero.any() else G.max()
    lo = G[at_upper].max() if at_upper.any() else G.min()
    return float(0.5 * (hi + lo))


def train_ocsvm(points, nu: float = 0.01, gamma: float | str = "auto", tol: float = SOLVER_TOL,
                max_iter: int | None = None, history: list | None = None, accept: float = KKT_TOL) -> OcsvmModel:
    """Fit a nu-parameterized one-class SVM.

    The dual is scaled so the multipliers sum to one and each lies in
    ``[0, 1/(nu*n)]``; the offset is the mean gradient over margin support
    vectors. ``gamma="auto"`` applies the median heuristic.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ArgumentError("points must be a 2-D matrix")
    n = X.shape[0]
    if not 0 < nu <= 1:
        raise ArgumentError(f"nu must lie in (0, 1], got {nu}")
    if n < 2:
        raise ArgumentError("one-class SVM needs at least two training points")
    if gamma == "auto" or gamma is None:
        gamma = median_gamma(X)
    gamma = float(gamma)
    if gamma <= 0:
        raise ArgumentError("gamma must be positive")
    C = 1.0 / (nu * n)
    Q = _kernel_matrix(X, gamma)
    alpha, G, it, violation = solve_dual(Q, C, tol, max_iter, history, accept)
    sv = alpha > 0
    return OcsvmModel(X[sv].copy(), alpha[sv].copy(), _offset(alpha, G, C), gamma, float(nu), n, it, violation)


def ocsvm_decision(model: OcsvmModel, point) -> np.ndarray | float:
    """``sum_j a_j K(sv_j, x) - offset``; positive on the normal side."""
    P = np.asarray(point, dtype=float)
    if P.shape[-1] != model.support_points.shape[1]:
        raise ArgumentError(
            f"point has {P.shape[-1]} coordinates, model expects {model.support_points.shape[1]}"
        )
    single = P.ndim == 1
    out = rbf_kernel(np.atleast_2d(P), model.support_points, model.gamma) @ model.alphas - model.offset
    return float(out[0]) if single else out
