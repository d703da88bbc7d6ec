"""Local outlier factor with exact brute-force neighborhoods."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import ArgumentError

LRD_CAP = 1e12
_DIRECT_MAX_DIM = 64


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix; identical rows get exactly zero distance.

    Low-dimensional inputs use direct differences. Wide inputs use the Gram
    expansion, whose round-off would otherwise leave duplicates at a tiny
    positive distance.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[1] <= _DIRECT_MAX_DIM:
        return cdist(X, X)
    sq = np.einsum("ij,ij->i", X, X)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D2, 0.0, out=D2)
    D = np.sqrt(D2)
    _, group = np.unique(X, axis=0, return_inverse=True)
    group = group.reshape(-1)
    D[group[:, None] == group[None, :]] = 0.0
    return D


def lof_scores(points, k: int) -> np.ndarray:
    """LOF of every row of ``points`` against the others.

    The k-distance neighborhood of a point contains every other point within
    its k-distance, so ties can make it larger than ``k``. A point whose
    mean reachability distance is zero (at least ``k`` duplicates) gets the
    capped density ``1e12``; a ratio of two capped densities counts as 1.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ArgumentError("points must be a 2-D matrix")
    n = X.shape[0]
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if n <= k:
        raise ArgumentError(f"LOF needs more than k={k} points, got {n}; use a smaller k")

    D = pairwise_distances(X)
    np.fill_diagonal(D, np.inf)
    kdist = np.partition(D, k - 1, axis=1)[:, k - 1]
    rows, cols = np.nonzero(D <= kdist[:, None])  # self excluded by the inf diagonal
    counts = np.bincount(rows, minlength=n)

    reach = np.maximum(kdist[cols], D[rows, cols])
    mean_reach = np.bincount(rows, weights=reach, minlength=n) / counts
    with np.errstate(divide="ignore"):
        lrd = np.where(mean_reach > 0, 1.0 / mean_reach, LRD_CAP)
    capped = lrd >= LRD_CAP
    lrd = np.minimum(lrd, LRD_CAP)

    ratio = lrd[cols] / lrd[rows]
    ratio[capped[rows] & capped[cols]] = 1.0
    return np.bincount(rows, weights=ratio, minlength=n) / counts
