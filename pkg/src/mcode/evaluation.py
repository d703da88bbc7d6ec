"""Detection metrics and the statistical comparison of methods."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special
from scipy.stats import rankdata

from .errors import ArgumentError, UndefinedMetricError


def _check_truth(scores, truth):
    s = np.asarray(scores, dtype=float)
    t = np.asarray(truth).astype(bool)
    if s.shape != t.shape or s.ndim != 1:
        raise ArgumentError("scores and truth must be 1-D and of equal length")
    return s, t


def roc_auc(scores, truth) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg) + P(tie) / 2."""
    s, t = _check_truth(scores, truth)
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both outliers and inliers")
    ranks = rankdata(s, method="average")
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, truth) -> float:
    """Area under the precision-recall curve with step interpolation.

    Thresholds run over the distinct score values in descending order, so
    tied scores enter together.
    """
    s, t = _check_truth(scores, truth)
    n_pos = int(t.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUC-PR needs at least one outlier")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(t)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def t_sf(t: float, df: float) -> float:
    """Upper tail of Student's t via the regularized incomplete beta function."""
    x = df / (df + t * t)
    tail = 0.5 * special.betainc(df / 2.0, 0.5, x)
    return float(tail if t >= 0 else 1.0 - tail)


def chi2_sf(x: float, df: float) -> float:
    return float(special.gammaincc(df / 2.0, x / 2.0)) if x > 0 else 1.0


def normal_sf(z: float) -> float:
    return float(0.5 * special.erfc(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p_value: float
    significant: bool
    df: int


def paired_ttest(a, b, alpha: float = 0.05) -> TTestResult:
    """Two-sided paired t-test on ``a - b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ArgumentError("paired t-test needs two equal-length samples of size >= 2")
    diff = a - b
    df = diff.size - 1
    sd = diff.std(ddof=1)
    if sd == 0:
        if np.all(diff == 0):
            return TTestResult(0.0, 1.0, False, df)
        t = math.copysign(math.inf, diff.mean())
        return TTestResult(t, 0.0, True, df)
    t = float(diff.mean() / (sd / math.sqrt(diff.size)))
    p = 2.0 * t_sf(abs(t), df)
    return TTestResult(t, p, p < alpha, df)


@dataclass(frozen=True)
class FriedmanResult:
    methods: tuple
    ranks: np.ndarray  # (methods, datasets), 1 = best
    mean_ranks: np.ndarray
    std_ranks: np.ndarray
    statistic: float
    p_value: float
    best: str
    holm: dict  # method -> {"z", "p", "threshold", "rejected"}
    equivalent_to_best: dict
    procedure: str = "Holm step-down, one-vs-best"


def friedman_holm(matrix, methods=None, alpha: float = 0.05) -> FriedmanResult:
    """Friedman ranks over datasets and Holm's step-down comparisons against the best method.

    ``matrix`` is methods x datasets with higher values better.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] < 2 or M.shape[1] < 2:
        raise ArgumentError("need at least 2 methods and 2 datasets")
    k, N = M.shape
    methods = tuple(methods) if methods is not None else tuple(f"m{i}" for i in range(k))
    ranks = np.column_stack([rankdata(-M[:, j], method="average") for j in range(N)])
    R = ranks.mean(axis=1)
    stat = 12.0 * N / (k * (k + 1)) * (np.sum(R ** 2) - k * (k + 1) ** 2 / 4.0)
    stat = max(float(stat), 0.0)
    p = chi2_sf(stat, k - 1)

    best = int(np.argmin(R))
    se = math.sqrt(k * (k + 1) / (6.0 * N))
    others = [i for i in range(k) if i != best]
    pvals = {i: 2.0 * normal_sf(abs(R[i] - R[best]) / se) for i in others}
    holm = {}
    stop = False
    for step, i in enumerate(sorted(others, key=lambda i: (pvals[i], i))):
        threshold = alpha / (len(others) - step)
        rejected = (not stop) and p < alpha and pvals[i] < threshold
        if not rejected:
            stop = True
        holm[methods[i]] = {"z": (R[i] - R[best]) / se, "p": pvals[i], "threshold": threshold, "rejected": rejected}
    equivalent = {methods[best]: True}
    equivalent.update({m: not h["rejected"] for m, h in holm.items()})
    return FriedmanResult(methods, ranks, R, ranks.std(axis=1, ddof=1), stat, p, methods[best], holm, equivalent)


@dataclass
class EvalReport:
    """Per-method, per-fold metric values for one or more datasets."""

    metric: str
    methods: tuple
    values: dict = field(default_factory=dict)  # (dataset, method) -> {(repeat, fold): value}
    folds: dict = field(default_factory=dict)  # dataset -> list of (repeat, fold)
    notes: list = field(default_factory=list)

    def add(self, dataset: str, repeat: int, fold: int, method: str, value: float) -> None:
        keys = self.folds.setdefault(dataset, [])
        if (repeat, fold) not in keys:
            keys.append((repeat, fold))
        self.values.setdefault((dataset, method), {})[(repeat, fold)] = value

    @property
    def datasets(self) -> list:
        return list(self.folds)

    def fold_values(self, dataset: str, method: str) -> np.ndarray:
        cells = self.values.get((dataset, method), {})
        return np.array([cells.get(key, np.nan) for key in self.folds[dataset]], dtype=float)

    def mean(self, dataset: str, method: str) -> float:
        v = self.fold_values(dataset, method)
        return float(np.nanmean(v)) if np.any(np.isfinite(v)) else math.nan

    def std(self, dataset: str, method: str) -> float:
        v = self.fold_values(dataset, method)
        v = v[np.isfinite(v)]
        return float(v.std(ddof=1)) if v.size > 1 else math.nan

    def best_set(self, dataset: str, alpha: float = 0.05) -> dict:
        """Methods statistically equivalent to the best mean (paired t-test over folds)."""
        means = {m: self.mean(dataset, m) for m in self.methods}
        finite = {m: v for m, v in means.items() if np.isfinite(v)}
        if not finite:
            return {}
        best = max(finite, key=finite.get)
        out = {}
        for m in self.methods:
            if m not in finite:
                out[m] = False
                continue
            if m == best:
                out[m] = True
                continue
            a, b = self.fold_values(dataset, best), self.fold_values(dataset, m)
            ok = np.isfinite(a) & np.isfinite(b)
            out[m] = ok.sum() >= 2 and not paired_ttest(a[ok], b[ok], alpha).significant
        return out

    def friedman(self, alpha: float = 0.05) -> FriedmanResult | None:
        if len(self.datasets) < 2:
            return None
        M = np.array([[self.mean(ds, m) for ds in self.datasets] for m in self.methods])
        if not np.all(np.isfinite(M)):
            return None
        return friedman_holm(M, self.methods, alpha)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "repeat", "fold", "method", "metric", "value"])
            for ds in self.datasets:
                for (r, f) in self.folds[ds]:
                    for m in self.methods:
                        v = self.values.get((ds, m), {}).get((r, f), math.nan)
                        w.writerow([ds, r, f, m, self.metric, "" if not np.isfinite(v) else repr(float(v))])

    def summary(self, alpha: float = 0.05) -> dict:
        doc = {"metric": self.metric, "methods": list(self.methods), "datasets": {}, "notes": list(self.notes)}
        for ds in self.datasets:
            bold = self.best_set(ds, alpha)
            doc["datasets"][ds] = {
                m: {
                    "mean": _num(self.mean(ds, m)),
                    "std": _num(self.std(ds, m)),
                    "n_folds": int(np.isfinite(self.fold_values(ds, m)).sum()),
                    "best": bool(bold.get(m, False)),
                }
                for m in self.methods
            }
        fr = self.friedman(alpha)
        if fr is not None:
            doc["ranks"] = {
                "procedure": fr.procedure,
                "statistic": fr.statistic,
                "p_value": fr.p_value,
                "best": fr.best,
                "methods": {
                    m: {"mean": float(fr.mean_ranks[i]), "std": float(fr.std_ranks[i]),
                        "equivalent_to_best": bool(fr.equivalent_to_best[m])}
                    for i, m in enumerate(fr.methods)
                },
            }
        return doc

    def write_summary(self, path, alpha: float = 0.05) -> None:
        Path(path).write_text(json.dumps(self.summary(alpha), indent=2) + "\n", encoding="utf-8")

    def table(self, alpha: float = 0.05) -> str:
        """Plain-text table: mean (std) per dataset, ``*`` marking the best set."""
        width = max(12, *(len(m) + 2 for m in self.methods))
        lines = [f"{self.metric:<12}" + "".join(f"{m:>{width + 4}}" for m in self.methods)]
        for ds in self.datasets:
            bold = self.best_set(ds, alpha)
            cells = []
            for m in self.methods:
                mu, sd = self.mean(ds, m), self.std(ds, m)
                text = "n/a" if not np.isfinite(mu) else f"{mu:.3f} ({0.0 if not np.isfinite(sd) else sd:.3f})"
                cells.append(f"{text + ('*' if bold.get(m) else ' '):>{width + 4}}")
            lines.append(f"{ds[:12]:<12}" + "".join(cells))
        fr = self.friedman(alpha)
        if fr is not None:
            cells = []
            for i, m in enumerate(fr.methods):
                text = f"{fr.mean_ranks[i]:.2f} ({fr.std_ranks[i]:.2f})" + ("*" if fr.equivalent_to_best[m] else " ")
                cells.append(f"{text:>{width + 4}}")
            lines.append(f"{'Rank':<12}" + "".join(cells))
        return "\n".join(lines) + "\n"


def _num(v):
    return None if not np.isfinite(v) else float(v)
