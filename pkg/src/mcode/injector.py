"""Label-space outlier injection with exact ground truth."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import ArgumentError

VARIABLE_LEVEL = "variable-level"
INSTANCE_LEVEL = "instance-level"


@dataclass(frozen=True)
class InjectionReport:
    """Which label cells were flipped.

    ``flipped_cells`` is an ``(k, 2)`` int array of ``(instance, label)`` pairs
    sorted lexicographically; ``old_values`` holds the bits before flipping.
    """

    flipped_cells: np.ndarray
    old_values: np.ndarray
    n: int
    protocol: str
    params: dict = field(default_factory=dict)

    @property
    def outlier_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=np.int8)
        if len(self.flipped_cells):
            mask[self.flipped_cells[:, 0]] = 1
        return mask

    @property
    def n_outliers(self) -> int:
        return int(self.outlier_mask.sum())

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["instance", "label", "old", "new"])
            for (i, j), old in zip(self.flipped_cells, self.old_values):
                w.writerow([int(i), int(j), int(old), 1 - int(old)])


def _report(ds: Dataset, cells: np.ndarray, protocol: str, params: dict) -> tuple[Dataset, InjectionReport]:
    cells = np.asarray(cells, dtype=np.intp).reshape(-1, 2)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    cells = cells[order]
    labels = ds.labels.copy()
    old = labels[cells[:, 0], cells[:, 1]].copy()
    labels[cells[:, 0], cells[:, 1]] = 1 - old
    cells.setflags(write=False)
    old.setflags(write=False)
    return ds.with_labels(labels), InjectionReport(cells, old, ds.n, protocol, params)


def apply_flips(ds: Dataset, report: InjectionReport) -> Dataset:
    """Flip the recorded cells of ``ds``; applying twice restores the input."""
    labels = ds.labels.copy()
    cells = report.flipped_cells
    labels[cells[:, 0], cells[:, 1]] ^= 1
    return ds.with_labels(labels)


def inject_variable_noise(
    ds: Dataset, rate: float, seed: int, unit: str = "cells"
) -> tuple[Dataset, InjectionReport]:
    """Flip a fraction of label variables chosen uniformly without pre-selection.

    With ``unit="cells"`` exactly ``round(rate * n * d)`` distinct cells of
    the label matrix are flipped. ``unit="instances"`` instead selects
    ``round(rate * n)`` instances and flips one uniformly chosen label in each.
    """
    if not 0.0 <= rate <= 1.0:
        raise ArgumentError(f"rate must lie in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    n, d = ds.n, ds.d
    params = {"rate": rate, "seed": seed, "unit": unit}
    if unit == "cells":
        count = int(round(rate * n * d))
        flat = rng.choice(n * d, size=count, replace=False)
        cells = np.column_stack([flat // d, flat % d])
    elif unit == "instances":
        count = int(round(rate * n))
        rows = rng.choice(n, size=count, replace=False)
        cells = np.column_stack([rows, rng.integers(0, d, size=count)])
    else:
        raise ArgumentError(f"unknown injection unit {unit!r}")
    return _report(ds, cells, VARIABLE_LEVEL, params)


def inject_instance_noise(
    ds: Dataset, instance_rate: float, p: int, seed: int
) -> tuple[Dataset, InjectionReport]:
    """Select ``round(instance_rate * n)`` instances and flip ``p`` distinct labels in each."""
    if not 0.0 <= instance_rate <= 1.0:
        raise ArgumentError(f"instance_rate must lie in [0, 1], got {instance_rate}")
    if not 1 <= p <= ds.d:
        raise ArgumentError(f"p must satisfy 1 <= p <= d={ds.d}, got {p}")
    rng = np.random.default_rng(seed)
    count = int(round(instance_rate * ds.n))
    rows = rng.choice(ds.n, size=count, replace=False)
    cells = [(i, j) for i in rows for j in rng.choice(ds.d, size=p, replace=False)]
    params = {"instance_rate": instance_rate, "p": p, "seed": seed}
    return _report(ds, np.array(cells, dtype=np.intp), INSTANCE_LEVEL, params)
