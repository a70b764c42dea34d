from __future__ import annotations

import csv
import io
import json
import warnings

import numpy as np
import pytest
from configs import tiny_config
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import auc_pairs

from genefuse.dataset import Dataset, FoldPlan, make_folds, synthesize
from genefuse.evaluation import (ConfusionMatrix, MetricSet, RunReport, confusion, cross_validate,
                                 evaluate_predictions, metrics, repeated_runs, roc_auc, roc_points,
                                 validate_report)
from genefuse.filters import anova_f_matrix
from genefuse.learners import train_logistic


class TestConfusionAndMetrics:
    def test_worked_case(self):
        cm = confusion([0, 0, 1, 1], [0, 1, 1, 1], 2)
        np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
        m = metrics(cm)
        assert m.accuracy == 0.75
        assert m.precision == (1.0 + 2 / 3) / 2
        assert m.recall == (0.5 + 1.0) / 2
        assert m.f1 == (2 / 3 + 0.8) / 2

    def test_perfect(self):
        cm = confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
        np.testing.assert_array_equal(cm.counts, np.diag([1, 1, 2]))
        m = metrics(cm)
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 4).flatmap(lambda C: st.tuples(
        st.just(C + 1), st.lists(st.tuples(st.integers(0, C), st.integers(0, C)), min_size=1, max_size=40))))
    def test_totals_and_accuracy(self, case):
        C, pairs = case
        t, p = map(np.array, zip(*pairs))
        cm = confusion(t, p, C)
        assert cm.total == t.size
        np.testing.assert_array_equal(cm.counts.sum(axis=1), np.bincount(t, minlength=C))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m = metrics(cm)
        assert m.accuracy == np.mean(t == p)
        for v in (m.precision, m.recall, m.f1):
            assert 0.0 <= v <= 1.0

    def test_undefined_class_flagged(self):
        cm = confusion([0, 1, 0], [0, 1, 1], 3)
        with pytest.warns(RuntimeWarning, match="undefined"):
            m = metrics(cm)
        assert m.undefined_classes == [2]
        assert abs(m.recall - (0.5 + 1.0 + 0.0) / 3) < 1e-15

    def test_weighted_average(self):
        m = metrics(ConfusionMatrix(np.array([[1, 1], [0, 2]])), "weighted")
        assert abs(m.recall - (0.5 * 0.5 + 0.5 * 1.0)) < 1e-15

    def test_errors(self):
        with pytest.raises(ValueError):
            confusion([0, 1], [0], 2)
        with pytest.raises(ValueError):
            confusion([0, 2], [0, 1], 2)
        with pytest.raises(ValueError):
            metrics(ConfusionMatrix(np.zeros((2, 2), dtype=int)))
        with pytest.raises(ValueError):
            metrics(ConfusionMatrix(np.eye(2)), "micro")


class TestAuc:
    def test_perfect_and_ties(self):
        assert roc_auc([0, 0, 1, 1], np.array([0.1, 0.2, 0.8, 0.9])) == 1.0
        assert roc_auc([0, 1, 0, 1], np.full(4, 0.5)) == 0.5

    @pytest.mark.parametrize("seed", range(10))
    def test_pairwise_oracle_and_reversal(self, seed):
        rng = np.random.default_rng(seed)
        t = rng.integers(0, 2, 50)
        t[:2] = [0, 1]
        s = np.round(rng.random(50), 1)  # coarse rounding forces ties
        auc = roc_auc(t, s)
        assert abs(auc - auc_pairs(t == 1, s)) < 1e-12
        assert abs(roc_auc(t, -s) - (1 - auc)) < 1e-12

    def test_multiclass_macro(self):
        rng = np.random.default_rng(3)
        t = np.arange(30) % 3
        P = rng.dirichlet(np.ones(3), 30)
        want = np.mean([auc_pairs(t == c, P[:, c]) for c in range(3)])
        assert abs(roc_auc(t, P) - want) < 1e-12

    def test_single_class(self):
        with pytest.raises(ValueError):
            roc_auc([1, 1, 1], np.array([0.2, 0.5, 0.9]))
        m = evaluate_predictions([1, 1], [1, 1], np.array([[0.1, 0.9], [0.2, 0.8]]), 2)
        assert m.auc is None

    def test_roc_points(self):
        pts = roc_points(np.array([0, 0, 1, 1]), np.array([[.9, .1], [.6, .4], [.65, .35], [.2, .8]]), 1)
        np.testing.assert_allclose(pts, [[0, 0], [0, .5], [.5, .5], [.5, 1], [1, 1]])


class _Majority:
    def __init__(self, train):
        self.cls = int(np.argmax(train.class_counts()))
        self.C = train.n_classes

    def predict(self, X):
        return np.full(len(X), self.cls)

    def predict_proba(self, X):
        return np.tile(np.eye(self.C)[self.cls], (len(X), 1))


class _AnovaLogistic:
    """Top-k ANOVA features then logistic regression, all fitted on the training rows."""

    def __init__(self, train, k=5):
        self.cols = np.sort(np.argsort(-anova_f_matrix(train.features, train.labels), kind="stable")[:k])
        self.model = train_logistic((train.features[:, self.cols], train.labels), solver="newton",
                                    n_classes=train.n_classes)

    def predict(self, X):
        return self.model.predict(X[:, self.cols])

    def predict_proba(self, X):
        return self.model.predict_proba(X[:, self.cols])


class TestCrossValidate:
    def test_majority_dummy(self):
        d, _ = synthesize(37, 4, 2, 3, seed=0)
        d = d.subset_rows(np.r_[np.arange(37), np.flatnonzero(d.labels == 2)[:8]])
        plan = make_folds(d, 5, 1)
        cv = cross_validate(d, _Majority, plan)
        for f, m in enumerate(cv.per_fold):
            te = plan.test_indices(f)
            maj = int(np.argmax(d.subset_rows(plan.train_indices(f)).class_counts()))
            assert m.accuracy == np.mean(d.labels[te] == maj)
        prevalence = d.class_counts().max() / d.n_samples
        assert abs(cv.aggregate["accuracy"] - prevalence) <= 1 / min(cv.fold_sizes)
        assert sum(cv.fold_sizes) == d.n_samples

    def test_column_permutation_invariance(self):
        d, _ = synthesize(50, 12, 4, 2, seed=2)
        perm = np.random.default_rng(0).permutation(12)
        plan = make_folds(d, 5, 0)
        a = cross_validate(d, _AnovaLogistic, plan)
        b = cross_validate(d.subset_columns(perm), _AnovaLogistic, plan)
        assert [m.accuracy for m in a.per_fold] == [m.accuracy for m in b.per_fold]
        for x, y in zip(a.per_fold, b.per_fold):
            assert abs(x.auc - y.auc) < 1e-9

    def test_leakage_canary(self):
        clean, canary = [], []
        for s in range(10):
            d, _ = synthesize(100, 30, 5, 2, seed=s)
            plan = make_folds(d, 5, s)
            clean.append(cross_validate(d, _AnovaLogistic, plan).aggregate["accuracy"])
            rng = np.random.default_rng(1000 + s)
            hits = 0
            for f in range(plan.k):
                te = plan.test_indices(f)
                y = d.labels.copy()
                y[te] = rng.integers(0, 2, te.size)
                noisy = Dataset(d.features, y, d.feature_names, d.class_names)
                hits += cross_validate(noisy, _AnovaLogistic, plan).per_fold[f].accuracy * te.size
            canary.append(hits / d.n_samples)
        assert np.median(clean) >= 0.9
        assert abs(np.mean(canary) - 0.5) <= 0.10

    def test_missing_class_fold(self):
        d = Dataset(np.arange(6.0)[:, None], np.array([0, 0, 0, 0, 0, 1]), ["x"], ["a", "b"])
        with pytest.raises(ValueError, match="fewer than k"):
            make_folds(d, 2, 0)
        with pytest.raises(ValueError, match="absent"):
            cross_validate(d, _Majority, FoldPlan(2, np.array([0, 0, 0, 1, 1, 1])))

    def test_full_pipeline_folds(self):
        d, _ = synthesize(40, 60, 5, 2, seed=0, separation=3.0)
        cv = cross_validate(d, tiny_config(), make_folds(d, 4, 0))
        assert len(cv.per_fold) == 4
        assert cv.aggregate["accuracy"] >= 0.75


class TestRunReport:
    def _report(self, runs=3, **kw):
        d, _ = synthesize(40, 60, 5, 2, seed=1, separation=3.0)
        return repeated_runs(d, tiny_config(), runs=runs, base_seed=7, dataset_name="synth", **kw)

    def test_single_run_std_zero(self):
        rep = self._report(1)
        assert all(v == 0.0 for v in rep.std.values() if v is not None)
        assert rep.seeds == [7]

    def test_report_roundtrip_and_determinism(self):
        a, b = self._report(), self._report()
        assert a.to_json() == b.to_json()
        d = validate_report(json.loads(a.to_json()))
        assert d["seeds"] == [7, 8, 9] and d["dataset"] == "synth"
        assert "wall_time" not in a.to_json()
        assert {"selected", "pool_size", "members"} <= set(d["runs"][0])

    def test_cv_protocol(self):
        rep = self._report(2, protocol="cv", folds=3)
        assert rep.protocol == "cv" and len(rep.per_run) == 2
        assert len(rep.extras[0]["fold_accuracy"]) == 3

    def test_validator_rejects_tampering(self):
        d = json.loads(self._report(2).to_json())
        d["mean"]["accuracy"] += 1e-9
        with pytest.raises(ValueError):
            validate_report(d)
        with pytest.raises(ValueError):
            validate_report({**d, "version": 2})
        with pytest.raises(ValueError):
            validate_report({**d, "schema": "x"})

    def test_csv_table_shape(self):
        runs = [MetricSet(a, a, a, a, 0.5) for a in np.linspace(0.9, 1.0, 10)]
        rep = RunReport.from_runs(runs, fingerprint="f", seeds=list(range(10)))
        rows = list(csv.reader(io.StringIO(rep.to_csv())))
        assert rows[0][0] == "Run" and len(rows) == 13
        assert [r[0] for r in rows[-2:]] == ["Avg", "Std"]
        assert rows[1][1] == "90.00" and rows[11][1] == "95.00"
        acc = np.linspace(0.9, 1.0, 10)
        assert rows[12][1] == f"{100 * acc.std(ddof=1):.2f}"

    def test_invalid_args(self):
        d, _ = synthesize(20, 5, 2, 2, seed=0)
        with pytest.raises(ValueError):
            repeated_runs(d, tiny_config(), runs=0)
        with pytest.raises(ValueError):
            repeated_runs(d, tiny_config(), protocol="loo")
