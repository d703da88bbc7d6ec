"""Outlier scores in rho-space (MCODE) and joint-space baselines.

Every score follows one orientation: higher means more outlying.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .dataset import Dataset
from .dbr import DbrModel, pseudo_likelihood
from .detectors import fast_mcd, lof_scores, ocsvm_decision, robust_distance_sq, train_ocsvm
from .detectors.mcd import N_STARTS
from .errors import ArgumentError

_logger = logging.getLogger(__name__)

COMP, RD, LR, LOF, OCSVM = "ComP", "RD", "Lr", "LOF", "OCSVM"
BASE_RD, BASE_LOF, BASE_OCSVM = "base-RD", "base-LOF", "base-OCSVM"
MCODE_METHODS = (COMP, RD, LR, LOF, OCSVM)
BASELINE_METHODS = (BASE_RD, BASE_LOF, BASE_OCSVM)
ALL_METHODS = BASELINE_METHODS + MCODE_METHODS


@dataclass(frozen=True)
class ScoreVector:
    method: str
    values: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ArgumentError(f"{self.method} produced non-finite scores")
        object.__setattr__(self, "values", v)


def percentile_rank(sv: ScoreVector | np.ndarray) -> np.ndarray:
    """``(average rank - 0.5) / n`` for each score, in (0, 1); ties share a rank."""
    values = sv.values if isinstance(sv, ScoreVector) else np.asarray(sv, dtype=float)
    if values.size == 0:
        raise ArgumentError("cannot rank an empty score vector")
    return (rankdata(values, method="average") - 0.5) / values.size


def score_comp(model: DbrModel, ds: Dataset) -> ScoreVector:
    """One minus the pseudo-likelihood of the observed labels."""
    return ScoreVector(COMP, 1.0 - pseudo_likelihood(model, ds))


def score_comp_from_rho(rho: np.ndarray) -> ScoreVector:
    return ScoreVector(COMP, 1.0 - np.prod(rho, axis=1))


def mad_distance_sq(points: np.ndarray) -> np.ndarray:
    """Diagonal robust distance using median location and MAD scale per dimension."""
    med = np.median(points, axis=0)
    mad = 1.4826 * np.median(np.abs(points - med), axis=0)
    scale = np.where(mad > 0, mad, 1.0)
    return (((points - med) / scale) ** 2).sum(axis=1)


def robust_distance_scores(points, method: str = RD, n_starts: int = N_STARTS, seed: int = 0,
                           location: str = "mcd") -> ScoreVector:
    """Squared robust distances of every row under an MCD fit on the rows themselves.

    ``location="mean"`` centres on the plain mean instead of the MCD location.
    With no more rows than dimensions the MCD is undefined and a diagonal
    median/MAD distance is used; ``params["fallback"]`` records this.
    """
    X = np.asarray(points, dtype=float)
    n, d = X.shape
    if n <= d:
        _logger.warning("%s: %d rows in %d dimensions, using the MAD fallback", method, n, d)
        return ScoreVector(method, mad_distance_sq(X), {"fallback": "mad"})
    est = fast_mcd(X, n_starts=n_starts, seed=seed)
    mu = X.mean(axis=0) if location == "mean" else None
    return ScoreVector(method, robust_distance_sq(est, X, location=mu), {"fallback": None, "location": location})


def score_rd(rho: np.ndarray, n_starts: int = N_STARTS, seed: int = 0, location: str = "mcd") -> ScoreVector:
    return robust_distance_scores(rho, RD, n_starts, seed, location)


def score_lr(rho: np.ndarray, r: float = np.inf) -> ScoreVector:
    """``||1 - rho||_r`` per row, for r in {1, 2, inf}."""
    if r not in (1, 2, np.inf):
        raise ArgumentError(f"unsupported norm order {r!r}; use 1, 2 or inf")
    return ScoreVector(LR, np.linalg.norm(1.0 - np.asarray(rho, dtype=float), ord=r, axis=1), {"r": r})


def score_lof(rho: np.ndarray, k: int = 30) -> ScoreVector:
    return ScoreVector(LOF, lof_scores(rho, k), {"k": k})


def score_ocsvm(train_rho: np.ndarray, test_rho: np.ndarray, nu: float = 0.01, gamma="auto",
                method: str = OCSVM) -> ScoreVector:
    """Negated one-class SVM decision values of test rows, the model trained on ``train_rho``."""
    model = train_ocsvm(train_rho, nu=nu, gamma=gamma)
    values = -ocsvm_decision(model, np.asarray(test_rho, dtype=float))
    return ScoreVector(method, values, {"nu": nu, "gamma": model.gamma, "offset": model.offset})


def joint_vectors(ds: Dataset, mean=None, scale=None) -> np.ndarray:
    """Concatenate (optionally standardized) features with raw labels."""
    X = ds.features
    if mean is not None:
        X = (X - mean) / scale
    return np.hstack([X, ds.labels.astype(float)])


def feature_standardizer(train: Dataset):
    mean = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    scale[~(scale > 1e-12)] = 1.0
    return mean, scale


def baseline_joint_scores(train: Dataset, test: Dataset, method: str, *, k: int = 30, nu: float = 0.01,
                          gamma="auto", standardize: bool = True, n_starts: int = N_STARTS,
                          seed: int = 0) -> ScoreVector:
    """Unconditional detection over concatenated (features, labels) vectors.

    RD and LOF are fitted on the test rows themselves; OCSVM is trained on
    the training rows and scores the test rows.
    """
    if train.m != test.m or train.d != test.d:
        raise ArgumentError("train and test dimensions differ")
    mean, scale = feature_standardizer(train) if standardize else (None, None)
    Jt = joint_vectors(test, mean, scale)
    if method in (RD, BASE_RD):
        return robust_distance_scores(Jt, BASE_RD, n_starts, seed)
    if method in (LOF, BASE_LOF):
        return ScoreVector(BASE_LOF, lof_scores(Jt, k), {"k": k})
    if method in (OCSVM, BASE_OCSVM):
        return score_ocsvm(joint_vectors(train, mean, scale), Jt, nu, gamma, BASE_OCSVM)
    raise ArgumentError(f"unknown baseline method {method!r}")


def write_scores_csv(path, scores: dict, truth=None) -> None:
    """Long-format table: instance, method, raw score, percentile rank, truth flag."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["instance", "method", "score", "percentile_rank", "truth"])
        for method, sv in scores.items():
            ranks = percentile_rank(sv)
            for i, (v, r) in enumerate(zip(sv.values, ranks)):
                w.writerow([i, method, repr(float(v)), repr(float(r)), "" if truth is None else int(truth[i])])
