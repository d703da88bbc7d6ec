import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mcode.errors import ArgumentError, UndefinedMetricError
from mcode.evaluation import (
    EvalReport,
    chi2_sf,
    friedman_holm,
    paired_ttest,
    pr_auc,
    roc_auc,
    t_sf,
)

from oracles import enumerate_pr_auc, pairs_auc

# Student's sleep data: extra hours of sleep under two drugs, same ten patients
SLEEP_A = [0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0]
SLEEP_B = [1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4]


def _hand_t(a, b):
    diff = [y - x for x, y in zip(a, b)]
    n = len(diff)
    mean = sum(diff) / n
    var = sum((v - mean) ** 2 for v in diff) / (n - 1)
    return mean / math.sqrt(var / n)


class TestRocAuc:
    def test_pairs_oracle(self):
        rng = np.random.default_rng(0)
        scores = np.round(rng.random(200), 2)  # rounding forces ties
        truth = rng.integers(0, 2, 200)
        assert abs(roc_auc(scores, truth) - pairs_auc(scores, truth)) <= 1e-12

    def test_separating(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert roc_auc(np.ones(10), [0] * 5 + [1] * 5) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.1, 0.2], [0, 0])

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_negation_and_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.integers(0, 10, 50).astype(float)
        t = rng.integers(0, 2, 50)
        t[:2] = [0, 1]
        assert roc_auc(s, t) + roc_auc(-s, t) == 1.0
        assert roc_auc(np.exp(s), t) == roc_auc(s, t)


class TestPrAuc:
    @pytest.mark.parametrize("seed", range(20))
    def test_enumeration_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        scores = rng.integers(0, 6, n).astype(float)
        truth = rng.integers(0, 2, n)
        truth[0] = 1
        assert abs(pr_auc(scores, truth) - enumerate_pr_auc(scores, truth)) <= 1e-12

    def test_perfect(self):
        assert pr_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_all_equal_is_prevalence(self):
        assert pr_auc(np.zeros(8), [1, 0, 0, 1, 0, 0, 0, 1]) == pytest.approx(3 / 8)

    def test_no_positives(self):
        with pytest.raises(UndefinedMetricError):
            pr_auc([0.3, 0.1], [0, 0])

    @pytest.mark.parametrize("seed", range(10))
    def test_informative_scores_beat_prevalence(self, seed):
        rng = np.random.default_rng(seed)
        truth = (rng.random(300) < 0.1).astype(int)
        truth[0] = 1
        scores = truth + rng.standard_normal(300)
        assert pr_auc(scores, truth) >= truth.mean()


class TestPairedT:
    def test_textbook_sleep_data(self):
        res = paired_ttest(SLEEP_B, SLEEP_A)
        assert res.t == pytest.approx(_hand_t(SLEEP_A, SLEEP_B), abs=1e-6)
        assert res.t == pytest.approx(4.0621277, abs=1e-6)
        assert res.df == 9
        assert res.p_value == pytest.approx(0.0028329, abs=1e-6)
        assert res.significant

    def test_equal_samples(self):
        res = paired_ttest(SLEEP_A, SLEEP_A)
        assert res.t == 0.0 and not res.significant

    def test_antisymmetry(self):
        assert paired_ttest(SLEEP_A, SLEEP_B).t == -paired_ttest(SLEEP_B, SLEEP_A).t

    def test_length_checks(self):
        with pytest.raises(ArgumentError):
            paired_ttest([1.0], [2.0])

    @pytest.mark.parametrize("t, df", [(0.5, 3), (2.2, 9), (-1.3, 29), (7.0, 2)])
    def test_tail_against_reference(self, t, df):
        assert t_sf(t, df) == pytest.approx(stats.t.sf(t, df), rel=1e-10)

    @pytest.mark.parametrize("x, df", [(0.3, 1), (5.0, 7), (40.0, 7)])
    def test_chi2_tail(self, x, df):
        assert chi2_sf(x, df) == pytest.approx(stats.chi2.sf(x, df), rel=1e-10)


class TestFriedman:
    def test_dominance(self):
        rng = np.random.default_rng(0)
        k, N = 5, 6
        base = rng.random((k, N))
        M = base + np.arange(k)[::-1, None] * 10  # method 0 best, method 4 worst everywhere
        fr = friedman_holm(M, [f"m{i}" for i in range(k)])
        assert fr.mean_ranks[0] == 1.0 and fr.mean_ranks[-1] == k
        assert fr.best == "m0"
        assert np.all(fr.std_ranks == 0)

    def test_all_equal(self):
        fr = friedman_holm(np.ones((4, 5)))
        np.testing.assert_array_equal(fr.mean_ranks, 2.5)
        assert fr.statistic == 0.0 and fr.p_value == 1.0
        assert all(fr.equivalent_to_best.values())

    def test_worst_everywhere_ranks_last(self):
        rng = np.random.default_rng(2)
        M = rng.uniform(0.6, 1.0, (8, 6))
        M[-1] = 0.5  # like a baseline near chance on every dataset
        fr = friedman_holm(M)
        assert fr.mean_ranks[-1] == 8.0 and fr.std_ranks[-1] == 0.0
        assert f"{fr.mean_ranks[-1]:.2f} ({fr.std_ranks[-1]:.2f})" == "8.00 (0.00)"

    def test_statistic_matches_reference(self):
        rng = np.random.default_rng(5)
        M = rng.random((4, 9))
        fr = friedman_holm(M)
        ref = stats.friedmanchisquare(*M)
        assert fr.statistic == pytest.approx(ref.statistic, rel=1e-12)
        assert fr.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_holm_step_down(self):
        # three methods, ten datasets: m0 best always, m1 second, m2 third
        M = np.tile([[3.0], [2.0], [1.0]], (1, 10))
        fr = friedman_holm(M, ["a", "b", "c"])
        se = math.sqrt(3 * 4 / (6 * 10))
        assert fr.holm["c"]["z"] == pytest.approx(2.0 / se)
        assert fr.holm["c"]["threshold"] == 0.025 and fr.holm["b"]["threshold"] == 0.05
        assert fr.holm["c"]["rejected"] and fr.holm["b"]["rejected"]
        assert fr.equivalent_to_best == {"a": True, "b": False, "c": False}

    def test_needs_two_by_two(self):
        with pytest.raises(ArgumentError):
            friedman_holm(np.ones((1, 3)))


def _report():
    rep = EvalReport("AUC", ("A", "B"))
    rng = np.random.default_rng(0)
    for ds, gap in (("d1", 0.2), ("d2", 0.0)):
        for r in range(2):
            for f in range(5):
                a = 0.8 + 0.01 * rng.standard_normal()
                rep.add(ds, r, f, "A", a)
                rep.add(ds, r, f, "B", a - gap + 0.01 * rng.standard_normal())
    return rep


class TestReport:
    def test_best_sets(self):
        rep = _report()
        assert rep.best_set("d1") == {"A": True, "B": False}
        assert rep.best_set("d2")["A"] and rep.best_set("d2")["B"]
        assert len(rep.fold_values("d1", "A")) == 10

    def test_serialization(self, tmp_path):
        rep = _report()
        rep.to_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "dataset,repeat,fold,method,metric,value"
        assert len(lines) == 1 + 2 * 10 * 2
        rep.write_summary(tmp_path / "s.json")
        doc = json.loads((tmp_path / "s.json").read_text())
        assert doc["ranks"]["procedure"].startswith("Holm")
        assert doc["datasets"]["d1"]["A"]["best"] is True
        table = rep.table()
        assert "Rank" in table and "*" in table

    def test_missing_cells(self):
        rep = EvalReport("AUC", ("A", "B"))
        rep.add("d", 0, 0, "A", 0.7)
        rep.add("d", 0, 1, "A", 0.9)
        assert math.isnan(rep.mean("d", "B"))
        assert rep.best_set("d") == {"A": True, "B": False}
        assert "n/a" in rep.table()
