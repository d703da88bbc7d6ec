"""Dependent Binary Relevance models built from L2-regularized logistic CPDs."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit, log_expit

from .dataset import Dataset
from .errors import ArgumentError, NumericError

_logger = logging.getLogger(__name__)

EPS = 1e-6
GRAD_TOL = 1e-6
MAX_ITER = 500
DEFAULT_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
DBR = "DBR"
BR = "BR"
_DIRECT_SOLVE_MAX_DIM = 256
FORMAT_NAME = "mcode-dbr"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    lam: float
    input_dim: int
    n_iter: int = 0
    history: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.input_dim,):
            raise ArgumentError(f"weights length {w.shape} != input_dim {self.input_dim}")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.intercept)):
            raise NumericError("logistic model has non-finite parameters")
        object.__setattr__(self, "weights", w)

    @property
    def n_params(self) -> int:
        return self.input_dim + 1


def sigmoid(z):
    return expit(z)


def clip_proba(p, eps: float = EPS):
    return np.clip(p, eps, 1.0 - eps)


def predict_proba(model: LogisticModel, x, eps: float = EPS):
    """P(y=1 | x) for a single input vector or a matrix of rows, clipped to [eps, 1-eps]."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ArgumentError(f"input has {x.shape[-1]} entries, model expects {model.input_dim}")
    return clip_proba(sigmoid(x @ model.weights + model.intercept), eps)


def logistic_objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """Mean log-loss plus ``lam/2 * ||w||^2``; ``theta = (w, b)`` with b unpenalized."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    # log(1+e^z) - y z
    loss = np.mean(-log_expit(z) + (1.0 - y) * z)
    return float(loss + 0.5 * lam * (w @ w))


def logistic_gradient(theta: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    w, b = theta[:-1], theta[-1]
    r = (expit(X @ w + b) - y) / X.shape[0]
    g = np.empty_like(theta)
    g[:-1] = X.T @ r + lam * w
    g[-1] = r.sum()
    return g


def _cg(hessp, g, tol, maxiter):
    """Conjugate gradients for H s = -g starting from zero."""
    s = np.zeros_like(g)
    r = -g.copy()
    p = r.copy()
    rr = r @ r
    for _ in range(maxiter):
        if np.sqrt(rr) <= tol:
            break
        Hp = hessp(p)
        curv = p @ Hp
        if curv <= 0:
            break
        a = rr / curv
        s += a * p
        r -= a * Hp
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    if not np.any(s):
        s = -g
    return s


def _constant_model(y: np.ndarray, k: int, lam: float) -> LogisticModel:
    rate = (y.sum() + 1.0) / (y.size + 2.0)
    return LogisticModel(np.zeros(k), float(np.log(rate / (1.0 - rate))), lam, k)


def train_logistic(
    X,
    y,
    lam: float,
    *,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
    init: LogisticModel | None = None,
    record: bool = False,
) -> LogisticModel:
    """Fit L2-regularized logistic regression by damped Newton iterations.

    Minimizes ``mean(log-loss) + lam/2 * ||w||^2`` with an unpenalized
    intercept. Newton directions come from a direct solve for narrow inputs
    and from conjugate gradients otherwise; every step is accepted only after
    an Armijo backtracking test, so the objective never increases.

    A label column holding a single class skips optimization and returns a
    constant model with Laplace-smoothed rate ``(pos + 1) / (n + 2)``.

    Parameters
    ----------
    X : array of shape (n, k)
    y : array of shape (n,)
        Binary targets.
    lam : float
        Non-negative L2 strength.
    init : LogisticModel, optional
        Warm start.
    record : bool
        Keep the per-iteration objective values in ``model.history``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ArgumentError("X must be (n, k) and y must be (n,)")
    n, k = X.shape
    if n < 1:
        raise ArgumentError("need at least one training instance")
    if lam < 0:
        raise ArgumentError("lambda must be non-negative")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ArgumentError("training inputs must be finite")
    pos = y.sum()
    if pos == 0 or pos == n:
        return _constant_model(y, k, lam)

    theta = np.zeros(k + 1)
    if init is not None and init.input_dim == k:
        theta[:-1] = init.weights
        theta[-1] = init.intercept
    else:
        rate = pos / n
        theta[-1] = np.log(rate / (1.0 - rate))

    f = logistic_objective(theta, X, y, lam)
    history = [f]
    n_iter = 0
    for it in range(1, max_iter + 1):
        g = logistic_gradient(theta, X, y, lam)
        gmax = np.max(np.abs(g))
        if gmax <= tol:
            break
        p = expit(X @ theta[:-1] + theta[-1])
        s = p * (1.0 - p) / n
        if k <= _DIRECT_SOLVE_MAX_DIM:
            Xa = np.hstack([X, np.ones((n, 1))])
            H = (Xa * s[:, None]).T @ Xa
            H[np.arange(k), np.arange(k)] += lam
            H[np.diag_indices_from(H)] += 1e-12
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = -g
        else:
            def hessp(v, s=s):
                u = s * (X @ v[:-1] + v[-1])
                out = np.empty_like(v)
                out[:-1] = X.T @ u + lam * v[:-1]
                out[-1] = u.sum()
                return out

            gnorm = np.linalg.norm(g)
            step = _cg(hessp, g, min(0.5, np.sqrt(gnorm)) * gnorm, maxiter=max(50, 2 * k))
        slope = g @ step
        if slope >= 0:
            step, slope = -g, -(g @ g)
        t = 1.0
        while True:
            cand = theta + t * step
            f_new = logistic_objective(cand, X, y, lam)
            if not np.isfinite(f_new):
                raise NumericError(
                    f"non-finite objective at iteration {it} (step {t:g}, |grad|max {gmax:.3g})"
                )
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if f_new > f:
            # no representable descent left; the point is numerically optimal
            break
        theta, f = cand, f_new
        n_iter = it
        history.append(f)
    else:
        _logger.debug("logistic solver hit the iteration cap (%d)", max_iter)

    if not np.isfinite(f):
        raise NumericError("non-finite objective after optimization")
    return LogisticModel(theta[:-1].copy(), float(theta[-1]), float(lam), k, n_iter, tuple(history) if record else ())


def _kfold_ids(n: int, folds: int, rng) -> np.ndarray:
    ids = np.empty(n, dtype=np.intp)
    ids[rng.permutation(n)] = np.arange(n) % folds
    return ids


def cv_scores(X, y, grid: Sequence[float], folds: int, seed: int) -> np.ndarray:
    """Mean held-out log-likelihood for each grid value (same folds for all)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    ids = _kfold_ids(len(y), folds, np.random.default_rng(seed))
    order = np.argsort(grid)[::-1]  # strongest penalty first, for warm starts
    scores = np.zeros(len(grid))
    for f in range(folds):
        tr, va = ids != f, ids == f
        prev = None
        for gi in order:
            model = train_logistic(X[tr], y[tr], grid[gi], init=prev)
            prev = model
            p = predict_proba(model, X[va])
            scores[gi] += np.sum(y[va] * np.log(p) + (1 - y[va]) * np.log(1 - p))
    return scores / len(y)


def select_lambda(X, y, grid: Sequence[float] = DEFAULT_GRID, folds: int = 5, seed: int = 0) -> float:
    """Grid value with the best cross-validated log-likelihood; ties go to the larger lambda.

    Falls back to ``lambda = 1`` when fewer than ten instances are available.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ArgumentError("lambda grid is empty")
    if len(grid) == 1:
        return grid[0]
    y = np.asarray(y, dtype=float)
    if len(y) < 10:
        return 1.0
    folds = min(folds, len(y))
    scores = cv_scores(X, y, grid, folds, seed)
    best = max(scores)
    return max(g for g, s in zip(grid, scores) if s == best)


# ---------------------------------------------------------------------------
# DBR

@dataclass(frozen=True)
class DbrModel:
    """One logistic CPD per label.

    Under ``DBR`` the CPD for label ``i`` takes the standardized features
    followed by all other labels in index order; under ``BR`` it takes the
    standardized features only.
    """

    cpds: tuple
    structure: str
    label_order: tuple
    feature_dim: int
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    @property
    def d(self) -> int:
        return len(self.cpds)

    @property
    def n_params(self) -> int:
        return sum(c.n_params for c in self.cpds)

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_mean) / self.feature_scale

    def logits(self, X, Y) -> np.ndarray:
        """Per-label logits of P(y_i = 1 | x, y without i), shape (n, d)."""
        Z = self.standardize(X)
        m, d = self.feature_dim, self.d
        Wx = np.stack([c.weights[:m] for c in self.cpds])  # (d, m)
        b = np.array([c.intercept for c in self.cpds])
        out = Z @ Wx.T + b
        if self.structure == DBR and d > 1:
            Wy = np.zeros((d, d))
            for i, c in enumerate(self.cpds):
                Wy[i, np.arange(d) != i] = c.weights[m:]
            out = out + np.asarray(Y, dtype=float) @ Wy.T
        return out


def _fit_standardizer(X: np.ndarray):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[~(scale > 1e-12)] = 1.0
    return mean, scale


def cpd_inputs(Z: np.ndarray, Y: np.ndarray, i: int, structure: str) -> np.ndarray:
    if structure == BR:
        return Z
    return np.hstack([Z, np.delete(np.asarray(Y, dtype=float), i, axis=1)])


def train_dbr(
    train: Dataset,
    structure: str = DBR,
    lam: float | Sequence[float] = DEFAULT_GRID,
    seed: int = 0,
    cv_folds: int = 5,
    workers: int = 1,
) -> DbrModel:
    """Train the d per-label CPDs independently.

    ``lam`` is either a fixed penalty or a grid to choose from by
    cross-validation (separately for each CPD).
    """
    if structure not in (DBR, BR):
        raise ArgumentError(f"unknown structure {structure!r}")
    X = train.features
    Y = train.labels
    mean, scale = _fit_standardizer(X)
    Z = (X - mean) / scale
    seeds = np.random.SeedSequence(seed).generate_state(train.d)

    def fit(i):
        A = cpd_inputs(Z, Y, i, structure)
        y = Y[:, i].astype(float)
        if np.isscalar(lam):
            chosen = float(lam)
        else:
            pos = y.sum()
            chosen = 1.0 if pos == 0 or pos == len(y) else select_lambda(A, y, lam, cv_folds, int(seeds[i]))
        return train_logistic(A, y, chosen)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cpds = tuple(pool.map(fit, range(train.d)))
    else:
        cpds = tuple(fit(i) for i in range(train.d))
    return DbrModel(cpds, structure, tuple(range(train.d)), train.m, mean, scale)


def _check(model: DbrModel, ds: Dataset):
    if ds.m != model.feature_dim or ds.d != model.d:
        raise ArgumentError(
            f"dataset is {ds.m} features x {ds.d} labels, model expects {model.feature_dim} x {model.d}"
        )


def compute_rho(model: DbrModel, ds: Dataset, eps: float = EPS) -> np.ndarray:
    """Probability each CPD assigns to the observed bit of its label, shape (n, d)."""
    _check(model, ds)
    p1 = clip_proba(sigmoid(model.logits(ds.features, ds.labels)), eps)
    return np.where(ds.labels == 1, p1, 1.0 - p1)


def pseudo_likelihood(model: DbrModel, ds: Dataset, eps: float = EPS) -> np.ndarray:
    """Product of the rho entries for every instance."""
    return np.prod(compute_rho(model, ds, eps), axis=1)


# ---------------------------------------------------------------------------
# persistence

def model_to_dict(model: DbrModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "structure": model.structure,
        "label_order": list(model.label_order),
        "feature_dim": model.feature_dim,
        "feature_mean": [float(v) for v in model.feature_mean],
        "feature_scale": [float(v) for v in model.feature_scale],
        "cpds": [
            {"lambda": c.lam, "intercept": c.intercept, "weights": [float(v) for v in c.weights]}
            for c in model.cpds
        ],
    }


def model_from_dict(doc: dict) -> DbrModel:
    if doc.get("format") != FORMAT_NAME:
        raise ArgumentError("not a serialized DBR model")
    if doc.get("version") != FORMAT_VERSION:
        raise ArgumentError(f"unsupported model version {doc.get('version')}")
    cpds = tuple(
        LogisticModel(np.array(c["weights"], dtype=float), float(c["intercept"]), float(c["lambda"]), len(c["weights"]))
        for c in doc["cpds"]
    )
    return DbrModel(
        cpds,
        doc["structure"],
        tuple(doc["label_order"]),
        int(doc["feature_dim"]),
        np.array(doc["feature_mean"], dtype=float),
        np.array(doc["feature_scale"], dtype=float),
    )


def save_model(model: DbrModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> DbrModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
