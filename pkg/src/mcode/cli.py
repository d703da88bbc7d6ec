"""Command-line entry point: ``mcode <subcommand> ...``.

Logs go to stderr; tabular output is CSV. The exit code is 0 on success and
otherwise the ``exit_code`` of the error category that stopped the run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import scoring
from .dataset import format_summary, load_dataset, save_arff, save_csv
from .dbr import BR, DBR, DEFAULT_GRID, compute_rho, load_model, save_model, train_dbr
from .errors import ArgumentError, MCODEError, ParseError
from .evaluation import pr_auc, roc_auc
from .experiment import EXP1, EXP2, RunConfig, run_experiment1, run_experiment2
from .injector import inject_instance_noise, inject_variable_noise

_logger = logging.getLogger("mcode")

IO_EXIT = 6


def _save(ds, path: str) -> None:
    if Path(path).suffix.lower() == ".csv":
        save_csv(ds, path)
    else:
        save_arff(ds, path)


def _methods(raw: Optional[str]) -> list:
    if not raw:
        return list(scoring.ALL_METHODS)
    out = [m.strip() for m in raw.split(",") if m.strip()]
    unknown = set(out) - set(scoring.ALL_METHODS)
    if unknown:
        raise ArgumentError(f"unknown methods {sorted(unknown)}; choose from {', '.join(scoring.ALL_METHODS)}")
    return out


def _norm_order(raw: str) -> float:
    return math.inf if raw.lower() in ("inf", "infinity") else float(raw)


# -- subcommands --------------------------------------------------------------

def cmd_info(args) -> int:
    ds = load_dataset(args.data, args.labels)
    sys.stdout.write(format_summary(ds))
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.data, args.labels)
    lam = DEFAULT_GRID if args.lam == "cv" else float(args.lam)
    model = train_dbr(ds, args.structure, lam, seed=args.seed, workers=args.workers)
    save_model(model, args.out)
    _logger.info("trained %s on %d rows; %d parameters; lambdas %s", args.structure, ds.n, model.n_params,
                 ", ".join(f"{c.lam:g}" for c in model.cpds))
    return 0


def cmd_inject(args) -> int:
    ds = load_dataset(args.data, args.labels)
    if args.protocol == "variable":
        noisy, report = inject_variable_noise(ds, args.rate, args.seed, args.unit)
    else:
        noisy, report = inject_instance_noise(ds, args.rate, args.p, args.seed)
    _save(noisy, args.out)
    report.to_csv(args.report)
    _logger.info("flipped %d cells in %d instances", len(report.flipped_cells), report.n_outliers)
    return 0


def _read_truth(path: str, n: int) -> np.ndarray:
    truth = np.zeros(n, dtype=np.int8)
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                i = int(row["instance"])
            except (KeyError, TypeError, ValueError):
                raise ParseError("injection report needs an integer 'instance' column", lineno) from None
            if not 0 <= i < n:
                raise ParseError(f"instance {i} outside 0..{n - 1}", lineno)
            truth[i] = 1
    return truth


def cmd_score(args) -> int:
    model = load_model(args.model)
    test = load_dataset(args.data, model.d)
    methods = _methods(args.methods)
    train = load_dataset(args.train, model.d) if args.train else None
    needs_train = {scoring.OCSVM, scoring.BASE_OCSVM} & set(methods)
    if needs_train and train is None:
        raise ArgumentError(f"{', '.join(sorted(needs_train))} need --train data")
    gamma = "auto" if args.gamma == "auto" else float(args.gamma)
    rho = compute_rho(model, test)
    out = {}
    for m in methods:
        if m == scoring.COMP:
            out[m] = scoring.score_comp_from_rho(rho)
        elif m == scoring.RD:
            out[m] = scoring.score_rd(rho, args.mcd_starts, args.seed, args.rd_location)
        elif m == scoring.LR:
            out[m] = scoring.score_lr(rho, _norm_order(args.r))
        elif m == scoring.LOF:
            out[m] = scoring.score_lof(rho, args.k)
        elif m == scoring.OCSVM:
            out[m] = scoring.score_ocsvm(compute_rho(model, train), rho, args.nu, gamma)
        else:
            base_train = train if train is not None else test
            out[m] = scoring.baseline_joint_scores(base_train, test, m, k=args.k, nu=args.nu, gamma=gamma,
                                                   standardize=not args.raw_baseline,
                                                   n_starts=args.mcd_starts, seed=args.seed)
    truth = _read_truth(args.truth, test.n) if args.truth else None
    scoring.write_scores_csv(args.out, out, truth)
    return 0


def cmd_evaluate(args) -> int:
    by_method: dict = {}
    with open(args.scores, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                flag = row["truth"]
                value = float(row["percentile_rank"] if args.use_ranks else row["score"])
                method = row["method"]
            except (KeyError, TypeError, ValueError):
                raise ParseError("expected columns method, score, percentile_rank, truth", lineno) from None
            if flag == "":
                raise ParseError("scores file has no ground truth; pass --truth when scoring", lineno)
            by_method.setdefault(method, ([], []))
            by_method[method][0].append(value)
            by_method[method][1].append(int(flag))
    metric = roc_auc if args.metric == "AUC" else pr_auc
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["method", "metric", "value"])
    for method, (values, truth) in by_method.items():
        w.writerow([method, args.metric, repr(metric(np.array(values), np.array(truth)))])
    return 0


def _experiment_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = RunConfig.from_file(args.config, cfg)
    overrides = {}
    if args.dataset:
        overrides["datasets"] = ", ".join(args.dataset)
    for key in ("folds", "repeats", "seed", "bootstrap_size", "workers", "rate", "instance_rate", "unit",
                "nu", "gamma", "k_lof", "structure", "rd_location", "mcd_starts"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    if args.out:
        overrides["output_dir"] = args.out
    if args.methods:
        overrides["methods"] = args.methods
    if args.r:
        overrides["r"] = args.r
    if args.lam:
        overrides["lambda_fixed"] = "none" if args.lam == "cv" else args.lam
    if getattr(args, "p", None):
        overrides["p_values"] = args.p
    if args.no_resume:
        overrides["resume"] = "false"
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ArgumentError(f"--set expects key=value, got {item!r}")
        overrides[key] = value
    return RunConfig.from_mapping(overrides, cfg)


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    run = run_experiment1 if args.command == EXP1 else run_experiment2
    report = run(cfg)
    sys.stdout.write(report.table())
    for note in report.notes:
        _logger.warning(note)
    _logger.info("results written to %s", cfg.output_dir)
    return 0


# -- parser -------------------------------------------------------------------

def _add_data(p, labels_required=True):
    p.add_argument("data", help="ARFF or CSV dataset")
    p.add_argument("-d", "--labels", type=int, required=labels_required,
                   help="number of label columns (the last ones)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcode", description="Conditional outlier detection in multi-label data")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    ap.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", help="print dataset statistics")
    _add_data(p)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("train", help="train a DBR or BR model")
    _add_data(p)
    p.add_argument("-o", "--out", required=True, help="model file (JSON)")
    p.add_argument("--structure", choices=[DBR, BR], default=DBR)
    p.add_argument("--lambda", dest="lam", default="cv", help="L2 strength, or 'cv' for the grid search")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="threads for per-label training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("inject", help="flip labels and write the audit trail")
    _add_data(p)
    p.add_argument("-o", "--out", required=True, help="noisy dataset (.arff or .csv)")
    p.add_argument("--report", required=True, help="injection audit CSV")
    p.add_argument("--protocol", choices=["variable", "instance"], default="variable")
    p.add_argument("--rate", type=float, default=0.005, help="cell rate (variable) or instance rate (instance)")
    p.add_argument("--p", type=int, default=1, help="labels flipped per chosen instance (instance protocol)")
    p.add_argument("--unit", choices=["cells", "instances"], default="cells")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("score", help="score a dataset with a trained model")
    p.add_argument("model", help="model file from 'train'")
    p.add_argument("data", help="dataset to score")
    p.add_argument("-o", "--out", required=True, help="scores CSV")
    p.add_argument("--train", help="held-out clean data for the one-class SVMs")
    p.add_argument("--truth", help="injection audit CSV giving the outlying instances")
    p.add_argument("--methods", help=f"comma-separated subset of {', '.join(scoring.ALL_METHODS)}")
    p.add_argument("--r", default="inf", help="norm order for Lr: 1, 2 or inf")
    p.add_argument("--k", type=int, default=30, help="LOF neighbours")
    p.add_argument("--nu", type=float, default=0.01)
    p.add_argument("--gamma", default="auto", help="RBF bandwidth or 'auto'")
    p.add_argument("--mcd-starts", type=int, default=500)
    p.add_argument("--rd-location", choices=["mcd", "mean"], default="mcd")
    p.add_argument("--raw-baseline", action="store_true", help="do not standardize baseline features")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="AUC or AUC-PR per method from a scores CSV")
    p.add_argument("scores")
    p.add_argument("--metric", choices=["AUC", "AUC-PR"], default="AUC")
    p.add_argument("--use-ranks", action="store_true", help="evaluate percentile ranks instead of raw scores")
    p.set_defaults(func=cmd_evaluate)

    for name, helptext in ((EXP1, "variable-level injection, ROC AUC"),
                           (EXP2, "instance-level injection swept over p, AUC-PR")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("-c", "--config", help="key = value config file; flags override it")
        p.add_argument("--dataset", action="append", help="path:label_count (repeatable)")
        p.add_argument("-o", "--out", help="output directory")
        p.add_argument("--folds", type=int)
        p.add_argument("--repeats", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--bootstrap-size", dest="bootstrap_size", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--methods")
        p.add_argument("--r")
        p.add_argument("--nu", type=float)
        p.add_argument("--gamma")
        p.add_argument("--k-lof", dest="k_lof", type=int)
        p.add_argument("--lambda", dest="lam", help="fixed L2 strength, or 'cv'")
        p.add_argument("--structure", choices=[DBR, BR])
        p.add_argument("--rd-location", dest="rd_location", choices=["mcd", "mean"])
        p.add_argument("--mcd-starts", dest="mcd_starts", type=int)
        if name == EXP1:
            p.add_argument("--rate", type=float)
            p.add_argument("--unit", choices=["cells", "instances"])
        else:
            p.add_argument("--instance-rate", dest="instance_rate", type=float)
            p.add_argument("--p", help="comma-separated p sweep, e.g. 1,2,3,5")
        p.add_argument("--no-resume", action="store_true", help="recompute folds that already have results")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        p.set_defaults(func=cmd_experiment)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except MCODEError as exc:
        _logger.error("%s error: %s", exc.category, exc)
        return exc.exit_code
    except OSError as exc:
        _logger.error("io error: %s", exc)
        return IO_EXIT


if __name__ == "__main__":
    sys.exit(main())
