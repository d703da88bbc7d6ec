"""Synthetic multi-label data with context-dependent and correlated labels."""

from __future__ import annotations

import numpy as np

from .dataset import Dataset


def make_multilabel(
    n: int,
    m: int = 10,
    d: int = 6,
    seed: int = 0,
    signal: float = 4.0,
    coupling: float = 3.0,
    name: str = "synthetic",
) -> Dataset:
    """Sample instances whose labels depend on the features and on each other.

    Labels are generated along a random chain: label ``i`` is a logistic
    function of a sparse projection of ``x`` plus a coupling term on the
    previous label, so both context-response and response-response
    dependences are present.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    Y = np.zeros((n, d), dtype=np.int8)
    for i in range(d):
        w = np.zeros(m)
        support = rng.choice(m, size=min(3, m), replace=False)
        w[support] = rng.standard_normal(support.size)
        w *= signal / max(np.linalg.norm(w), 1e-12)
        logit = X @ w - 0.5
        if i > 0:
            logit = logit + coupling * (2.0 * Y[:, i - 1] - 1.0)
        p = 1.0 / (1.0 + np.exp(-logit))
        Y[:, i] = rng.random(n) < p
    return Dataset(X, Y, name=name)


def make_null_multilabel(n: int, m: int = 5, d: int = 4, seed: int = 0, rate: float = 0.3) -> Dataset:
    """Labels drawn independently of the features (pure noise)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    Y = (rng.random((n, d)) < rate).astype(np.int8)
    return Dataset(X, Y, name="null")
