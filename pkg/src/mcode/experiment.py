"""Cross-validated injection experiments.

Experiment 1 flips a fraction of label cells in each test fold and reports
ROC AUC; experiment 2 flips ``p`` labels in a fixed fraction of test
instances and reports AUC-PR for each ``p``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from . import scoring
from .dataset import Dataset, bootstrap_sample, load_dataset, make_fold_plan, split_half
from .dbr import DBR, DEFAULT_GRID, compute_rho, train_dbr
from .detectors import ocsvm_decision, train_ocsvm
from .detectors.mcd import N_STARTS
from .errors import ArgumentError, MCODEError, UndefinedMetricError
from .evaluation import EvalReport, pr_auc, roc_auc
from .injector import inject_instance_noise, inject_variable_noise

_logger = logging.getLogger(__name__)

EXP1, EXP2 = "exp1", "exp2"


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.

    ``datasets`` holds ``(path, label_count)`` pairs. ``lambda_fixed`` set to
    a number bypasses the cross-validated choice over ``lambda_grid``.
    """

    datasets: list = field(default_factory=list)
    protocol: str = EXP1
    rate: float = 0.005
    unit: str = "cells"
    instance_rate: float = 0.005
    p_values: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    bootstrap_size: int = 5000
    folds: int = 10
    repeats: int = 3
    seed: int = 0
    r: float = math.inf
    k_lof: int = 30
    nu: float = 0.01
    gamma: str = "auto"
    lambda_grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    lambda_fixed: float | None = None
    cv_folds: int = 5
    structure: str = DBR
    methods: list = field(default_factory=lambda: list(scoring.ALL_METHODS))
    mcd_starts: int = N_STARTS
    baseline_mcd_starts: int = 20
    rd_location: str = "mcd"
    standardize_baseline: bool = True
    output_dir: str = "runs/out"
    workers: int = 1
    resume: bool = True
    write_scores: bool = True

    def validate(self, check_paths: bool = True) -> "RunConfig":
        if self.protocol not in (EXP1, EXP2):
            raise ArgumentError(f"protocol must be {EXP1} or {EXP2}")
        if not self.datasets:
            raise ArgumentError("no datasets configured")
        for path, d in self.datasets:
            if check_paths and not Path(path).exists():
                raise ArgumentError(f"dataset file not found: {path}")
            if int(d) < 1:
                raise ArgumentError(f"label count for {path} must be >= 1")
        unknown = set(self.methods) - set(scoring.ALL_METHODS)
        if unknown:
            raise ArgumentError(f"unknown methods: {sorted(unknown)}")
        if self.r not in (1, 2, math.inf):
            raise ArgumentError("r must be 1, 2 or inf")
        if self.protocol == EXP2 and not self.p_values:
            raise ArgumentError("exp2 needs a non-empty p sweep")
        return self

    # -- flat key=value text ------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "datasets":
                v = ", ".join(f"{p}:{d}" for p, d in v)
            elif isinstance(v, list):
                v = ", ".join(_fmt_value(x) for x in v)
            else:
                v = _fmt_value(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping: dict, base: "RunConfig | None" = None) -> "RunConfig":
        cfg = base or cls()
        types = {f.name: f for f in fields(cls)}
        updates = {}
        for key, raw in mapping.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise ArgumentError(f"unknown config key {key!r}")
            updates[key] = _parse_value(key, raw, getattr(cfg, key))
        return replace(cfg, **updates)

    @classmethod
    def from_file(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        mapping = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ArgumentError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping, base)


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def _parse_scalar(raw: str, like):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if isinstance(like, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ArgumentError(f"expected a boolean, got {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float) or like is None:
        return float(raw)
    return raw


def _parse_value(key: str, raw, current):
    if not isinstance(raw, str):
        return raw
    if key == "datasets":
        out = []
        for item in raw.split(","):
            item = item.strip()
            if not item:
                continue
            path, sep, d = item.rpartition(":")
            if not sep:
                raise ArgumentError(f"dataset entry {item!r} must look like path:label_count")
            out.append((path, int(d)))
        return out
    if key in ("p_values", "lambda_grid", "methods"):
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if key == "p_values":
            return [int(x) for x in items]
        if key == "lambda_grid":
            return [float(x) for x in items]
        return items
    if key == "r":
        return math.inf if raw.strip().lower() in ("inf", "infinity") else float(raw)
    if key == "gamma":
        return raw.strip()
    if key == "lambda_fixed":
        return None if raw.strip().lower() in ("none", "") else float(raw)
    return _parse_scalar(raw, current)


# ---------------------------------------------------------------------------
# fold pipeline


@dataclass
class FoldContext:
    """Models trained on the clean training part of one fold."""

    model: object
    ocsvm_rho: object
    ocsvm_joint: object
    standardizer: tuple
    test: Dataset
    seeds: dict


def fold_seeds(seed: int, dataset_index: int, repeat: int, fold: int) -> dict:
    state = np.random.SeedSequence([seed, dataset_index, repeat, fold]).generate_state(6)
    names = ("split", "lambda", "bootstrap", "inject", "mcd", "baseline_mcd")
    return {k: int(v) for k, v in zip(names, state)}


def _gamma(cfg: RunConfig):
    return "auto" if str(cfg.gamma).lower() == "auto" else float(cfg.gamma)


def prepare_fold(ds: Dataset, train_idx, test_idx, cfg: RunConfig, seeds: dict) -> FoldContext:
    train = ds.take(train_idx)
    test = ds.take(test_idx)
    dbr_part, ocsvm_part = split_half(train, seeds["split"])
    lam = cfg.lambda_fixed if cfg.lambda_fixed is not None else cfg.lambda_grid
    model = train_dbr(dbr_part, cfg.structure, lam, seeds["lambda"], cfg.cv_folds)
    if cfg.bootstrap_size and test.n < cfg.bootstrap_size:
        test = bootstrap_sample(test, cfg.bootstrap_size, seeds["bootstrap"])
    methods = set(cfg.methods)
    gamma = _gamma(cfg)
    standardizer = scoring.feature_standardizer(train) if cfg.standardize_baseline else (None, None)
    ocsvm_rho = ocsvm_joint = None
    if scoring.OCSVM in methods:
        ocsvm_rho = _try_ocsvm(scoring.OCSVM, compute_rho(model, ocsvm_part), cfg.nu, gamma)
    if scoring.BASE_OCSVM in methods:
        ocsvm_joint = _try_ocsvm(scoring.BASE_OCSVM, scoring.joint_vectors(train, *standardizer), cfg.nu, gamma)
    return FoldContext(model, ocsvm_rho, ocsvm_joint, standardizer, test, seeds)


def _try_ocsvm(method: str, points, nu: float, gamma):
    # a failed detector only blanks its own column
    try:
        return train_ocsvm(points, nu=nu, gamma=gamma)
    except MCODEError as exc:
        _logger.error("%s training failed: %s", method, exc)
        return None


def score_fold(ctx: FoldContext, noisy: Dataset, cfg: RunConfig) -> dict:
    """All configured score vectors for one injected test set; failures map to ``None``."""
    rho = compute_rho(ctx.model, noisy)
    joint = None
    out = {}
    for method in cfg.methods:
        try:
            if method == scoring.COMP:
                sv = scoring.score_comp_from_rho(rho)
            elif method == scoring.RD:
                sv = scoring.score_rd(rho, cfg.mcd_starts, ctx.seeds["mcd"], cfg.rd_location)
            elif method == scoring.LR:
                sv = scoring.score_lr(rho, cfg.r)
            elif method == scoring.LOF:
                sv = scoring.score_lof(rho, cfg.k_lof)
            elif method == scoring.OCSVM:
                if ctx.ocsvm_rho is None:
                    raise ArgumentError("no trained model")
                sv = scoring.ScoreVector(method, -ocsvm_decision(ctx.ocsvm_rho, rho), {"nu": cfg.nu})
            else:
                if joint is None:
                    joint = scoring.joint_vectors(noisy, *ctx.standardizer)
                if method == scoring.BASE_RD:
                    sv = scoring.robust_distance_scores(joint, method, cfg.baseline_mcd_starts, ctx.seeds["baseline_mcd"])
                elif method == scoring.BASE_LOF:
                    sv = scoring.ScoreVector(method, scoring.lof_scores(joint, cfg.k_lof), {"k": cfg.k_lof})
                else:
                    if ctx.ocsvm_joint is None:
                        raise ArgumentError("no trained model")
                    sv = scoring.ScoreVector(method, -ocsvm_decision(ctx.ocsvm_joint, joint), {"nu": cfg.nu})
        except (MCODEError, LinAlgError) as exc:
            _logger.error("%s failed: %s", method, exc)
            sv = None
        out[method] = sv
    return out


def _metric(name: str, sv, truth) -> float:
    if sv is None:
        return math.nan
    ranks = scoring.percentile_rank(sv)
    try:
        return roc_auc(ranks, truth) if name == "AUC" else pr_auc(ranks, truth)
    except UndefinedMetricError:
        return math.nan


def _fold_job(args):
    ds, ds_index, r, f, train_idx, test_idx, cfg, out_dir = args
    return _run_fold(ds, ds_index, r, f, train_idx, test_idx, cfg, Path(out_dir))


def _run_fold(ds, ds_index, r, f, train_idx, test_idx, cfg: RunConfig, out_dir: Path) -> dict:
    """Run one (repeat, fold); returns ``{setting: {method: value}}``.

    ``setting`` is ``None`` for experiment 1 and ``p`` for experiment 2.
    """
    tag = f"r{r}_f{f}"
    fold_dir = out_dir / "folds" / ds.name
    result_path = fold_dir / f"{tag}.json"
    if cfg.resume and result_path.exists():
        doc = json.loads(result_path.read_text(encoding="utf-8"))
        return {(None if k == "-" else int(k)): {m: (math.nan if v is None else v) for m, v in vals.items()}
                for k, vals in doc["results"].items()}
    fold_dir.mkdir(parents=True, exist_ok=True)
    seeds = fold_seeds(cfg.seed, ds_index, r, f)
    results = {}
    notes = []
    try:
        ctx = prepare_fold(ds, train_idx, test_idx, cfg, seeds)
    except (MCODEError, LinAlgError) as exc:
        _logger.error("%s %s: training failed: %s", ds.name, tag, exc)
        settings = [None] if cfg.protocol == EXP1 else list(cfg.p_values)
        return {s: {m: math.nan for m in cfg.methods} for s in settings}

    if cfg.protocol == EXP1:
        settings = [None]
    else:
        settings = list(cfg.p_values)
    for setting in settings:
        if setting is None:
            noisy, report = inject_variable_noise(ctx.test, cfg.rate, seeds["inject"], cfg.unit)
            metric, suffix = "AUC", ""
        else:
            if setting > ds.d:
                _logger.warning("%s: p=%d exceeds d=%d, skipped", ds.name, setting, ds.d)
                results[setting] = {m: math.nan for m in cfg.methods}
                continue
            noisy, report = inject_instance_noise(ctx.test, cfg.instance_rate, setting, seeds["inject"])
            metric, suffix = "AUC-PR", f"_p{setting}"
        truth = report.outlier_mask
        if truth.sum() == 0:
            notes.append(f"undefined-metric: no outliers injected{suffix or ''}")
        scores = score_fold(ctx, noisy, cfg)
        results[setting] = {m: _metric(metric, sv, truth) for m, sv in scores.items()}
        report.to_csv(fold_dir / f"{tag}{suffix}_injection.csv")
        if cfg.write_scores:
            scoring.write_scores_csv(fold_dir / f"{tag}{suffix}_scores.csv",
                                     {m: sv for m, sv in scores.items() if sv is not None}, truth)

    doc = {
        "dataset": ds.name,
        "repeat": r,
        "fold": f,
        "seeds": seeds,
        "notes": notes,
        "lambdas": [c.lam for c in ctx.model.cpds],
        "results": {("-" if s is None else str(s)): {m: (None if not np.isfinite(v) else v) for m, v in vals.items()}
                    for s, vals in results.items()},
    }
    result_path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return results


def _run(cfg: RunConfig, datasets=None) -> tuple:
    cfg.validate(check_paths=datasets is None)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    if datasets is None:
        datasets = [load_dataset(path, d) for path, d in cfg.datasets]
    jobs = []
    for i, ds in enumerate(datasets):
        plan = make_fold_plan(ds.n, cfg.folds, cfg.repeats, np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0])
        for r, f, tr, te in plan.folds():
            jobs.append((ds, i, r, f, tr, te, cfg, str(out_dir)))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            outcomes = list(pool.map(_fold_job, jobs))
    else:
        outcomes = [_fold_job(j) for j in jobs]
    return datasets, jobs, outcomes, out_dir


def run_experiment1(cfg: RunConfig, datasets=None) -> EvalReport:
    """Variable-level injection, eight detectors, ROC AUC over all folds.

    ``datasets`` may pass preloaded :class:`Dataset` objects instead of the
    configured files.
    """
    cfg = replace(cfg, protocol=EXP1)
    datasets, jobs, outcomes, out_dir = _run(cfg, datasets)
    report = EvalReport("AUC", tuple(cfg.methods))
    for job, res in zip(jobs, outcomes):
        ds, _, r, f = job[:4]
        for m, v in res[None].items():
            report.add(ds.name, r, f, m, v)
    _finish(report, out_dir)
    _write_pairs(report, out_dir / "paired.csv")
    return report


def run_experiment2(cfg: RunConfig, datasets=None) -> EvalReport:
    """Instance-level injection swept over ``p``; AUC-PR per (dataset, p).

    Report datasets are keyed ``"<name>/p=<p>"``.
    """
    cfg = replace(cfg, protocol=EXP2)
    datasets, jobs, outcomes, out_dir = _run(cfg, datasets)
    report = EvalReport("AUC-PR", tuple(cfg.methods))
    for p in cfg.p_values:
        for job, res in zip(jobs, outcomes):
            ds, _, r, f = job[:4]
            for m, v in res[p].items():
                report.add(f"{ds.name}/p={p}", r, f, m, v)
    _finish(report, out_dir)
    _write_p_sweep(report, cfg, datasets, out_dir / "p_sweep.csv")
    return report


def _finish(report: EvalReport, out_dir: Path) -> None:
    undefined = [(ds, m) for ds in report.datasets for m in report.methods
                 if not np.any(np.isfinite(report.fold_values(ds, m)))]
    if undefined:
        report.notes.append(f"undefined-metric for {len(undefined)} dataset/method cells")
    report.to_csv(out_dir / "report.csv")
    report.write_summary(out_dir / "summary.json")
    (out_dir / "table.txt").write_text(report.table(), encoding="utf-8")


_PAIRS = ((scoring.BASE_RD, scoring.RD, "RD"), (scoring.BASE_LOF, scoring.LOF, "LOF"),
          (scoring.BASE_OCSVM, scoring.OCSVM, "OCSVM"))


def _write_pairs(report: EvalReport, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "group", "variant", "method", "mean", "std"])
        for ds in report.datasets:
            for base, mcode, group in _PAIRS:
                for variant, m in (("baseline", base), ("MCODE", mcode)):
                    if m in report.methods:
                        w.writerow([ds, group, variant, m, _cell(report.mean(ds, m)), _cell(report.std(ds, m))])


def _write_p_sweep(report: EvalReport, cfg: RunConfig, datasets, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "p", "method", "mean", "std"])
        for ds in datasets:
            for p in cfg.p_values:
                key = f"{ds.name}/p={p}"
                for m in report.methods:
                    w.writerow([ds.name, p, m, _cell(report.mean(key, m)), _cell(report.std(key, m))])


def _cell(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


def curve(report: EvalReport, dataset: str, method: str, p_values) -> np.ndarray:
    """Mean experiment-2 metric for ``method`` at each ``p``."""
    return np.array([report.mean(f"{dataset}/p={p}", method) for p in p_values])
