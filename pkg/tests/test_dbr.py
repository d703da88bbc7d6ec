import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcode.dataset import Dataset
from mcode.dbr import (
    BR,
    DBR,
    EPS,
    DbrModel,
    LogisticModel,
    compute_rho,
    cv_scores,
    load_model,
    logistic_gradient,
    logistic_objective,
    predict_proba,
    pseudo_likelihood,
    select_lambda,
    train_dbr,
    train_logistic,
)
from mcode.errors import ArgumentError
from mcode.synthetic import make_multilabel


def central_diff(f, theta, h=1e-6):
    g = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def _logistic_data(n=300, k=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    w = rng.standard_normal(k)
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ w + 0.3)))).astype(float)
    return X, y


class TestObjective:
    @pytest.mark.parametrize("point", range(10))
    def test_gradient_matches_finite_differences(self, point):
        X, y = _logistic_data(seed=point)
        rng = np.random.default_rng(100 + point)
        theta = rng.standard_normal(X.shape[1] + 1)
        lam = 10.0 ** rng.uniform(-3, 1)
        g = logistic_gradient(theta, X, y, lam)
        fd = central_diff(lambda t: logistic_objective(t, X, y, lam), theta)
        assert np.linalg.norm(g - fd) / np.linalg.norm(g) <= 1e-5

    def test_gradient_vanishes_at_solution(self):
        X, y = _logistic_data()
        model = train_logistic(X, y, 0.1)
        theta = np.r_[model.weights, model.intercept]
        fd = central_diff(lambda t: logistic_objective(t, X, y, 0.1), theta)
        assert np.max(np.abs(fd)) <= 1e-5
        assert np.max(np.abs(logistic_gradient(theta, X, y, 0.1))) <= 1e-6

    @pytest.mark.parametrize("lam", [1e-3, 1.0])
    @pytest.mark.parametrize("k", [5, 300])
    def test_objective_monotone(self, lam, k):
        X, y = _logistic_data(n=400, k=k, seed=k)
        model = train_logistic(X, y, lam, record=True)
        h = np.array(model.history)
        assert len(h) >= 2
        assert np.all(np.diff(h) <= 0)

    def test_wide_cg_path_converges(self):
        X, y = _logistic_data(n=200, k=400, seed=3)
        model = train_logistic(X, y, 0.1)
        g = logistic_gradient(np.r_[model.weights, model.intercept], X, y, 0.1)
        assert np.max(np.abs(g)) <= 1e-6

    def test_large_lambda_shrinks(self):
        X, y = _logistic_data(seed=4)
        model = train_logistic(X, y, 1e6)
        assert np.linalg.norm(model.weights) <= 1e-3
        assert np.all(np.abs(predict_proba(model, X) - y.mean()) <= 1e-3)

    @pytest.mark.parametrize("value", [0.0, 1.0])
    def test_single_class_constant(self, value):
        X = np.random.default_rng(0).standard_normal((8, 3))
        y = np.full(8, value)
        model = train_logistic(X, y, 1.0)
        expected = (y.sum() + 1) / 10
        assert np.all(model.weights == 0)
        assert predict_proba(model, X[0]) == pytest.approx(expected, abs=1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(ArgumentError):
            train_logistic(np.array([[np.nan], [1.0]]), np.array([0.0, 1.0]), 1.0)


class TestPredict:
    def test_zero_model(self):
        m = LogisticModel(np.zeros(3), 0.0, 1.0, 3)
        assert predict_proba(m, np.ones(3)) == 0.5

    def test_ln3(self):
        m = LogisticModel(np.array([1.0, 0.0]), 0.0, 1.0, 2)
        assert predict_proba(m, np.array([math.log(3), 5.0])) == pytest.approx(0.75, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(z=st.floats(-30, 30))
    def test_symmetry(self, z):
        m = LogisticModel(np.array([1.0]), 0.0, 1.0, 1)
        assert predict_proba(m, [z]) == pytest.approx(1 - predict_proba(m, [-z]), abs=1e-15)

    def test_dimension_mismatch(self):
        m = LogisticModel(np.zeros(3), 0.0, 1.0, 3)
        with pytest.raises(ArgumentError):
            predict_proba(m, np.ones(2))


class TestSelectLambda:
    def test_single_element(self):
        X, y = _logistic_data()
        assert select_lambda(X, y, [0.37]) == 0.37

    def test_tie_goes_to_larger(self):
        # a constant target makes every penalty score identically
        X = np.random.default_rng(0).standard_normal((40, 2))
        y = np.zeros(40)
        assert select_lambda(X, y, [0.01, 5.0, 0.1]) == 5.0

    def test_small_n_fallback(self):
        X, y = _logistic_data(n=9)
        assert select_lambda(X, y) == 1.0

    def test_argmax_of_exhaustive_grid(self):
        X, y = _logistic_data(n=200, k=10, seed=8)
        grid = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]
        chosen = select_lambda(X, y, grid, folds=5, seed=2)
        # recompute every grid point independently with its own cold-started fits
        ids = np.empty(len(y), dtype=int)
        ids[np.random.default_rng(2).permutation(len(y))] = np.arange(len(y)) % 5
        ll = {}
        for lam in grid:
            total = 0.0
            for f in range(5):
                tr, va = ids != f, ids == f
                p = predict_proba(train_logistic(X[tr], y[tr], lam), X[va])
                total += np.sum(y[va] * np.log(p) + (1 - y[va]) * np.log(1 - p))
            ll[lam] = total / len(y)
        assert all(ll[chosen] >= v - 1e-5 for v in ll.values())
        np.testing.assert_allclose(cv_scores(X, y, grid, 5, 2), [ll[g] for g in grid], atol=1e-5)


def _unpermuted_weights(model, perm):
    """Return (Wx, Wy) in original label order for a model trained on permuted columns."""
    d, m = model.d, model.feature_dim
    Wx = np.zeros((d, m))
    Wy = np.zeros((d, d))
    b = np.zeros(d)
    for j, c in enumerate(model.cpds):
        orig = perm[j]
        Wx[orig] = c.weights[:m]
        b[orig] = c.intercept
        sib = [perm[k] for k in range(d) if k != j]
        Wy[orig, sib] = c.weights[m:]
    return Wx, Wy, b


class TestDbr:
    def test_parameter_count(self):
        ds = make_multilabel(60, m=5, d=3, seed=1)
        model = train_dbr(ds, DBR, lam=1.0)
        assert [c.input_dim for c in model.cpds] == [7, 7, 7]
        assert model.n_params == 24 == ds.d * (ds.m + ds.d)
        br = train_dbr(ds, BR, lam=1.0)
        assert [c.input_dim for c in br.cpds] == [5, 5, 5]

    def test_single_label_structures_coincide(self):
        ds = make_multilabel(80, m=4, d=1, seed=2)
        a, b = train_dbr(ds, DBR, lam=0.5), train_dbr(ds, BR, lam=0.5)
        np.testing.assert_array_equal(a.cpds[0].weights, b.cpds[0].weights)

    def test_label_permutation(self, synth):
        perm = np.array([3, 0, 4, 1, 2])
        permuted = Dataset(synth.features, synth.labels[:, perm])
        base = train_dbr(synth, DBR, lam=0.1)
        other = train_dbr(permuted, DBR, lam=0.1)
        Wx0, Wy0, b0 = _unpermuted_weights(base, np.arange(5))
        Wx1, Wy1, b1 = _unpermuted_weights(other, perm)
        np.testing.assert_allclose(Wx0, Wx1, atol=1e-5)
        np.testing.assert_allclose(Wy0, Wy1, atol=1e-5)
        np.testing.assert_allclose(b0, b1, atol=1e-5)

    def test_br_ignores_other_labels(self, synth):
        model = train_dbr(synth, BR, lam=1.0)
        rho = compute_rho(model, synth)
        Y = synth.labels.copy()
        rng = np.random.default_rng(0)
        Y[:, 1:] = rng.permutation(Y[:, 1:])
        rho2 = compute_rho(model, synth.with_labels(Y))
        np.testing.assert_array_equal(rho[:, 0], rho2[:, 0])

    def test_cv_grid_training(self, synth):
        model = train_dbr(synth, DBR, seed=3)
        assert all(c.lam in (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0) for c in model.cpds)


def _hand_model():
    # two labels, two features, identity standardization
    c0 = LogisticModel(np.array([0.5, -1.0, 2.0]), 0.25, 1.0, 3)
    c1 = LogisticModel(np.array([-0.75, 0.1, -1.5]), -0.5, 1.0, 3)
    return DbrModel((c0, c1), DBR, (0, 1), 2, np.zeros(2), np.ones(2))


class TestRho:
    def test_hand_computed(self):
        model = _hand_model()
        x = np.array([[1.5, -0.5], [0.0, 2.0]])
        y = np.array([[1, 0], [0, 1]])
        rho = compute_rho(model, Dataset(x, y))
        for n in range(2):
            z0 = 0.5 * x[n, 0] - 1.0 * x[n, 1] + 2.0 * y[n, 1] + 0.25
            z1 = -0.75 * x[n, 0] + 0.1 * x[n, 1] - 1.5 * y[n, 0] - 0.5
            p0, p1 = 1 / (1 + math.exp(-z0)), 1 / (1 + math.exp(-z1))
            want = [p0 if y[n, 0] else 1 - p0, p1 if y[n, 1] else 1 - p1]
            np.testing.assert_allclose(rho[n], want, rtol=1e-12, atol=0)

    def test_complement_rule(self):
        z = math.log(9)  # p = 0.9
        c = LogisticModel(np.array([0.0]), z, 1.0, 1)
        model = DbrModel((c,), DBR, (0,), 1, np.zeros(1), np.ones(1))
        rho = compute_rho(model, Dataset(np.zeros((1, 1)), np.zeros((1, 1))))
        assert rho[0, 0] == pytest.approx(0.1, abs=1e-15)

    def test_zero_model_half(self, synth):
        cpds = tuple(LogisticModel(np.zeros(synth.m + synth.d - 1), 0.0, 1.0, synth.m + synth.d - 1)
                     for _ in range(synth.d))
        model = DbrModel(cpds, DBR, tuple(range(synth.d)), synth.m, np.zeros(synth.m), np.ones(synth.m))
        assert np.all(compute_rho(model, synth) == 0.5)
        assert np.allclose(pseudo_likelihood(model, synth), 0.5 ** synth.d)

    def test_dimension_mismatch(self, synth):
        model = _hand_model()
        with pytest.raises(ArgumentError):
            compute_rho(model, synth)

    def test_bounds_and_pseudo_likelihood(self, synth):
        model = train_dbr(synth, DBR, lam=1e-3)
        rho = compute_rho(model, synth)
        assert rho.min() >= EPS and rho.max() <= 1 - EPS
        pl = pseudo_likelihood(model, synth)
        np.testing.assert_allclose(pl, np.exp(np.log(rho).sum(axis=1)), rtol=1e-12)

    def test_saturated_rho(self):
        c = LogisticModel(np.array([0.0]), 100.0, 1.0, 1)
        model = DbrModel((c, c, c), BR, (0, 1, 2), 1, np.zeros(1), np.ones(1))
        pl = pseudo_likelihood(model, Dataset(np.zeros((1, 1)), np.ones((1, 3))))
        assert pl[0] == pytest.approx((1 - EPS) ** 3, rel=1e-12)


def test_persistence_bit_exact(synth, tmp_path):
    model = train_dbr(synth, DBR, lam=0.05)
    from mcode.dbr import save_model

    save_model(model, tmp_path / "m.json")
    loaded = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(compute_rho(model, synth), compute_rho(loaded, synth))
    assert loaded.structure == DBR and loaded.n_params == model.n_params


def test_load_rejects_other_formats(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ArgumentError):
        load_model(tmp_path / "x.json")
