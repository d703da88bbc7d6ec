import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcode.dataset import Dataset
from mcode.errors import ArgumentError
from mcode.injector import (
    INSTANCE_LEVEL,
    VARIABLE_LEVEL,
    apply_flips,
    inject_instance_noise,
    inject_variable_noise,
)


def _random_ds(n, m, d, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((n, m)), rng.integers(0, 2, (n, d)))


def _check_report(ds, noisy, report):
    np.testing.assert_array_equal(noisy.features, ds.features)
    diff = np.argwhere(noisy.labels != ds.labels)
    np.testing.assert_array_equal(diff, report.flipped_cells)
    assert len({tuple(c) for c in report.flipped_cells}) == len(report.flipped_cells)
    expected = np.zeros(ds.n, dtype=np.int8)
    expected[report.flipped_cells[:, 0]] = 1
    np.testing.assert_array_equal(report.outlier_mask, expected)


class TestVariableLevel:
    def test_rate_zero(self):
        ds = _random_ds(50, 3, 4)
        noisy, rep = inject_variable_noise(ds, 0.0, seed=1)
        assert len(rep.flipped_cells) == 0
        assert rep.outlier_mask.sum() == 0
        np.testing.assert_array_equal(noisy.labels, ds.labels)

    def test_exact_count(self):
        ds = _random_ds(1000, 2, 20)
        noisy, rep = inject_variable_noise(ds, 0.005, seed=3)
        assert len(rep.flipped_cells) == 100
        assert rep.protocol == VARIABLE_LEVEL
        _check_report(ds, noisy, rep)
        assert rep.n_outliers <= 100

    def test_involution(self):
        ds = _random_ds(200, 2, 6)
        noisy, rep = inject_variable_noise(ds, 0.05, seed=9)
        np.testing.assert_array_equal(apply_flips(noisy, rep).labels, ds.labels)

    def test_instance_unit(self):
        ds = _random_ds(400, 2, 5)
        noisy, rep = inject_variable_noise(ds, 0.05, seed=2, unit="instances")
        assert rep.n_outliers == 20 and len(rep.flipped_cells) == 20
        _check_report(ds, noisy, rep)

    def test_bad_rate(self):
        with pytest.raises(ArgumentError):
            inject_variable_noise(_random_ds(5, 1, 1), 1.5, 0)

    def test_deterministic(self):
        ds = _random_ds(300, 2, 7)
        _, a = inject_variable_noise(ds, 0.01, seed=5)
        _, b = inject_variable_noise(ds, 0.01, seed=5)
        np.testing.assert_array_equal(a.flipped_cells, b.flipped_cells)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 80), d=st.integers(1, 8), rate=st.floats(0, 1), seed=st.integers(0, 10**6))
    def test_count_property(self, n, d, rate, seed):
        ds = _random_ds(n, 1, d, seed)
        noisy, rep = inject_variable_noise(ds, rate, seed)
        assert len(rep.flipped_cells) == round(rate * n * d)
        _check_report(ds, noisy, rep)


class TestInstanceLevel:
    def test_forced_counts(self):
        ds = _random_ds(5000, 1, 6)
        noisy, rep = inject_instance_noise(ds, 0.005, 3, seed=4)
        assert rep.n_outliers == 25 and len(rep.flipped_cells) == 75
        assert rep.protocol == INSTANCE_LEVEL
        assert np.all(np.bincount(rep.flipped_cells[:, 0], minlength=ds.n)[rep.outlier_mask.astype(bool)] == 3)
        _check_report(ds, noisy, rep)

    def test_full_complement(self):
        ds = _random_ds(400, 2, 4)
        noisy, rep = inject_instance_noise(ds, 0.05, 4, seed=1)
        rows = rep.outlier_mask.astype(bool)
        np.testing.assert_array_equal(noisy.labels[rows], 1 - ds.labels[rows])
        np.testing.assert_array_equal(noisy.labels[~rows], ds.labels[~rows])

    def test_rate_zero_identity(self):
        ds = _random_ds(100, 2, 3)
        noisy, rep = inject_instance_noise(ds, 0.0, 2, seed=1)
        np.testing.assert_array_equal(noisy.labels, ds.labels)
        assert rep.n_outliers == 0

    def test_p_too_large(self):
        with pytest.raises(ArgumentError):
            inject_instance_noise(_random_ds(10, 1, 3), 0.1, 4, 0)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 80), d=st.integers(1, 8), rate=st.floats(0, 1), data=st.data())
    def test_count_property(self, n, d, rate, data):
        p = data.draw(st.integers(1, d))
        ds = _random_ds(n, 1, d)
        noisy, rep = inject_instance_noise(ds, rate, p, seed=n * 31 + d)
        assert rep.n_outliers == round(rate * n)
        assert len(rep.flipped_cells) == round(rate * n) * p
        _check_report(ds, noisy, rep)


def test_audit_csv(tmp_path):
    ds = _random_ds(100, 1, 3)
    noisy, rep = inject_variable_noise(ds, 0.1, seed=0)
    rep.to_csv(tmp_path / "a.csv")
    with (tmp_path / "a.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30
    for row in rows:
        i, j = int(row["instance"]), int(row["label"])
        assert int(row["old"]) == ds.labels[i, j]
        assert int(row["new"]) == noisy.labels[i, j]
