from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import logistic_objective

from genefuse.dataset import Dataset, SplitSpec, make_fold_plan, split, synthesize
from genefuse.learners import (ForestConfig, ForestModel, GbtConfig, LogisticModel, VotingEnsemble,
                               combine_votes, fit_vote_weights, load_model, loss_and_grad,
                               model_from_dict, model_to_dict, predict_forest, predict_gbt,
                               predict_logistic, save_model, train_forest, train_gbt,
                               train_logistic, vote, weights_from_accuracies)
from genefuse.learners.gbt import logistic_loss
from genefuse.learners.logistic import _fit_newton_binary, batched_binary_newton
from genefuse.trees import LEAF, Tree, grow_newton


def _ds(X, y, C=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    C = C or int(y.max()) + 1
    return Dataset(X, y, [f"f{j}" for j in range(X.shape[1])], [str(c) for c in range(C)])


def _leaf_tree(counts) -> Tree:
    return Tree(np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]),
                np.array([counts], dtype=float), np.array([int(sum(counts))]))


def fd_relative_error(seed: int) -> float:
    rng = np.random.default_rng(seed)
    n, p, C = rng.integers(5, 30), rng.integers(1, 6), rng.integers(2, 5)
    X = rng.standard_normal((n, p))
    Y = np.eye(C)[rng.integers(0, C, n)]
    theta = rng.normal(0, 0.5, C * (p + 1))
    l2 = rng.uniform(0, 2)
    _, g = loss_and_grad(theta, X, Y, l2)
    h = 1e-6
    fd = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fd[i] = (loss_and_grad(theta + e, X, Y, l2)[0] - loss_and_grad(theta - e, X, Y, l2)[0]) / (2 * h)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))


class TestLogistic:
    def test_symmetric_boundary(self):
        m = train_logistic(_ds([[-1.0], [1.0]], [0, 1]))
        assert abs(m.predict_proba(np.array([[0.0]]))[0, 1] - 0.5) < 1e-6
        np.testing.assert_array_equal(m.predict(np.array([[-1.0], [1.0]])), [0, 1])

    def test_loss_matches_literal_objective(self):
        rng = np.random.default_rng(0)
        X, Y = rng.standard_normal((12, 3)), np.eye(3)[rng.integers(0, 3, 12)]
        theta = rng.standard_normal(3 * 4)
        assert abs(loss_and_grad(theta, X, Y, 0.7)[0] - logistic_objective(theta, X, Y, 0.7)) < 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_check(self, seed):
        assert fd_relative_error(seed) < 1e-5

    def test_strong_penalty_gives_priors(self):
        d, _ = synthesize(40, 5, 3, 3, seed=1)
        m = train_logistic(d, l2=1e9)
        assert np.max(np.abs(m.weights)) < 1e-6
        np.testing.assert_allclose(m.predict_proba(d.features[:3]),
                                   np.tile(d.class_counts() / d.n_samples, (3, 1)), atol=1e-6)

    def test_half_goes_to_class_one(self):
        m = LogisticModel(np.zeros((2, 2)), np.zeros(2))
        assert m.predict_proba(np.zeros((1, 2)))[0, 1] == 0.5
        assert m.predict(np.zeros((1, 2)))[0] == 1

    def test_probabilities_normalized_and_monotone(self):
        rng = np.random.default_rng(4)
        d, _ = synthesize(50, 6, 3, 3, seed=4)
        m = train_logistic(d)
        P = m.predict_proba(rng.normal(0, 5, (1000, 6)))
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
        b = train_logistic(synthesize(50, 4, 2, 2, seed=3)[0])
        w = b.weights[1] - b.weights[0]
        t = np.linspace(-3, 3, 50)[:, None] * w[None, :]
        assert np.all(np.diff(b.predict_proba(t)[:, 1]) > 0)

    def test_newton_matches_lbfgs(self):
        d, _ = synthesize(60, 8, 4, 2, seed=6)
        a = train_logistic(d, solver="lbfgs")
        b = train_logistic(d, solver="newton")
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-5)
        np.testing.assert_allclose(a.bias, b.bias, atol=1e-5)
        assert a.converged and b.converged

    def test_batched_newton_matches_single(self):
        d, _ = synthesize(50, 6, 3, 2, seed=8)
        plan = make_fold_plan(d.labels, 5, 0)
        parts = [plan.train_indices(f) for f in range(5)]
        m = max(len(r) for r in parts)
        Xs, ts, ws = np.zeros((5, m, 6)), np.zeros((5, m)), np.zeros((5, m))
        for b, rows in enumerate(parts):
            Xs[b, :len(rows)], ts[b, :len(rows)], ws[b, :len(rows)] = d.features[rows], d.labels[rows], 1
        theta = batched_binary_newton(Xs, ts, ws, 1.0)
        for b, rows in enumerate(parts):
            W, bias, _, _ = _fit_newton_binary(d.features[rows], d.labels[rows], 1.0, 100, 1e-6)
            np.testing.assert_allclose(theta[b, :-1], W[1] - W[0], atol=1e-8)
            np.testing.assert_allclose(theta[b, -1], bias[1] - bias[0], atol=1e-8)

    def test_errors(self):
        m = LogisticModel(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValueError):
            m.predict(np.zeros((1, 2)))
        with pytest.raises(FloatingPointError):
            train_logistic((np.array([[np.nan], [1.0]]), np.array([0, 1])))
        with pytest.raises(ValueError):
            train_logistic(_ds([[0.0], [1.0]], [0, 1]), solver="sgd")

    def test_predict_pair(self):
        d, _ = synthesize(30, 4, 2, 2, seed=0)
        m = train_logistic(d)
        cls, prob = predict_logistic(m, d.features)
        np.testing.assert_array_equal(cls, m.predict(d.features))
        np.testing.assert_array_equal(prob, m.predict_proba(d.features))


class TestForest:
    def test_stump_separates_four_points(self):
        d = _ds([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
        f = train_forest(d, ForestConfig(n_trees=1, bootstrap=False, max_features=None))
        np.testing.assert_array_equal(f.predict(d.features), d.labels)
        assert f.trees[0].feature[0] == 0 and f.trees[0].threshold[0] == 1.5

    def test_single_label(self):
        rng = np.random.default_rng(0)
        d = _ds(rng.standard_normal((10, 3)), np.zeros(10, dtype=int), 2)
        f = train_forest(d, ForestConfig(n_trees=5))
        np.testing.assert_array_equal(f.predict(rng.standard_normal((7, 3))), 0)

    def test_forest_beats_single_tree_cv(self):
        for s in range(10):
            d, _ = synthesize(60, 20, 5, 2, seed=s)
            forest = train_forest(d, ForestConfig(n_trees=30, seed=s))
            train_acc = np.mean(forest.predict(d.features) == d.labels)
            plan = make_fold_plan(d.labels, 5, s)
            hits = 0
            for k in range(5):
                tr, te = plan.train_indices(k), plan.test_indices(k)
                tree = train_forest(d.subset_rows(tr), ForestConfig(n_trees=1, seed=s))
                hits += np.sum(tree.predict(d.features[te]) == d.labels[te])
            assert train_acc >= hits / d.n_samples

    def test_vote_counting_and_ties(self):
        f = ForestModel([_leaf_tree([1, 0])] * 60 + [_leaf_tree([0, 1])] * 40, [0] * 100, 1, 2, 1,
                        np.zeros(1))
        np.testing.assert_allclose(f.predict_proba(np.zeros((1, 1))), [[0.6, 0.4]])
        assert f.predict(np.zeros((1, 1)))[0] == 0
        tie = ForestModel([_leaf_tree([1, 0])] * 50 + [_leaf_tree([0, 1])] * 50, [0] * 100, 1, 2, 1,
                          np.zeros(1))
        assert tie.predict(np.zeros((1, 1)))[0] == 0
        # a leaf with tied counts votes for the lower class
        assert ForestModel([_leaf_tree([2, 2])], [0], 1, 2, 1, np.zeros(1)).predict(np.zeros((1, 1)))[0] == 0

    def test_structure_and_determinism(self):
        d, _ = synthesize(50, 30, 5, 3, seed=2)
        cfg = ForestConfig(n_trees=12, max_depth=4, seed=11)
        a, b = train_forest(d, cfg), train_forest(d, cfg)
        c = train_forest(d, cfg, workers=2)
        assert len(a.trees) == 12 and a.feature_subsample == 6
        for x, y, z in zip(a.trees, b.trees, c.trees):
            assert x.to_dict() == y.to_dict() == z.to_dict()
        P = a.predict_proba(d.features)
        np.testing.assert_allclose(P.sum(axis=1), 1.0)
        assert abs(a.importances.sum() - 1.0) < 1e-12 and np.all(a.importances >= 0)
        for t in a.trees:
            assert t.depth() <= 4
            inner = t.feature != LEAF
            leaves = ~inner
            np.testing.assert_array_equal(t.value[leaves].sum(axis=1), t.n_samples[leaves])
            np.testing.assert_array_equal(t.n_samples[t.left[inner]] + t.n_samples[t.right[inner]],
                                          t.n_samples[inner])
        cls, prob = predict_forest(a, d.features)
        np.testing.assert_array_equal(cls, a.predict(d.features))

    def test_errors(self):
        with pytest.raises(ValueError):
            train_forest(_ds([[0.0], [1.0]], [0, 1]), ForestConfig(min_samples_split=3))
        f = train_forest(_ds([[0.0], [1.0]], [0, 1]), ForestConfig(n_trees=2))
        with pytest.raises(ValueError):
            f.predict(np.zeros((1, 2)))


class TestGbt:
    def test_leaf_weight_by_hand(self):
        g = np.array([0.5, -0.3, 0.2, -0.6])
        h = np.array([0.25, 0.21, 0.16, 0.24])
        t = grow_newton(np.zeros((4, 1)), g, h, np.arange(4), max_depth=0, reg_lambda=1.0)
        assert t.n_nodes == 1
        assert abs(t.value[0] - 0.2 / 1.86) < 1e-12

    def test_loss_non_increasing_full_sample(self):
        for s in range(3):
            d, _ = synthesize(40, 6, 3, 2 + s % 2, seed=s)
            m = train_gbt(d, GbtConfig(n_rounds=30, subsample=1.0, seed=s))
            assert len(m.loss_history) == 31
            assert all(b <= a + 1e-12 for a, b in zip(m.loss_history, m.loss_history[1:]))

    def test_subsampled_loss_decreases(self):
        for s in range(3):
            d, _ = synthesize(40, 6, 3, 3, seed=s)
            m = train_gbt(d, GbtConfig(n_rounds=20, seed=s))
            assert m.loss_history[-1] < m.loss_history[0]

    def test_leaves_match_formula(self):
        d, _ = synthesize(30, 4, 2, 2, seed=5)
        cfg = GbtConfig(n_rounds=3, subsample=1.0, max_depth=2, gamma=0.0)
        m = train_gbt(d, cfg)
        t = (d.labels == 1).astype(float)
        s = np.full(d.n_samples, m.base_score[0])
        for tree in m.sequences[0]:
            p = 1.0 / (1.0 + np.exp(-s))
            g, h = p - t, p * (1 - p)
            leaf = tree.apply(d.features)
            for j in np.unique(leaf):
                rows = leaf == j
                assert abs(tree.value[j] + g[rows].sum() / (h[rows].sum() + cfg.reg_lambda)) < 1e-10
            s = s + cfg.learning_rate * tree.value[leaf]

    def test_huge_gamma_gives_priors(self):
        d, _ = synthesize(45, 5, 3, 3, seed=1)
        m = train_gbt(d, GbtConfig(n_rounds=5, gamma=1e9, subsample=1.0))
        assert all(t.n_nodes == 1 for seq in m.sequences for t in seq)
        prior = d.class_counts() / d.n_samples
        # on the full sample G = 0 at the prior, so every single leaf is zero
        np.testing.assert_allclose(m.predict_proba(d.features[:4]), np.tile(prior, (4, 1)), atol=1e-12)

    def test_zero_trees_and_zero_tree(self):
        d, _ = synthesize(31, 5, 3, 2, seed=2)
        m = train_gbt(d, GbtConfig(n_rounds=0))
        prior = d.class_counts() / d.n_samples
        np.testing.assert_allclose(m.predict_proba(d.features[:3]), np.tile(prior, (3, 1)), atol=1e-12)
        full = train_gbt(d, GbtConfig(n_rounds=5))
        before = full.predict_proba(d.features)
        zero = Tree(np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]),
                    np.array([0.0]), np.array([d.n_samples]))
        full.sequences[0].append(zero)
        np.testing.assert_array_equal(full.predict_proba(d.features), before)
        np.testing.assert_allclose(before.sum(axis=1), 1.0, atol=1e-9)
        cls, _ = predict_gbt(full, d.features)
        np.testing.assert_array_equal(cls, full.predict(d.features))

    def test_empty_class(self):
        with pytest.raises(ValueError, match="no training samples"):
            train_gbt(_ds(np.zeros((4, 1)), [0, 0, 2, 2], 3))

    def test_logistic_loss(self):
        assert abs(logistic_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0])) - 2 * np.log(2)) < 1e-15


class TestVoting:
    def test_hard(self):
        np.testing.assert_array_equal(combine_votes(np.array([[1, 1, 0], [2, 0, 0], [0, 1, 2]]), 3),
                                      [1, 0, 0])

    def test_weighted(self):
        w = np.array([0.6, 0.3, 0.1])
        assert combine_votes(np.array([[0, 1, 1]]), 2, "weighted", w)[0] == 0
        assert combine_votes(np.array([[0, 1, 1]]), 2, "weighted", np.array([0.5, 0.25, 0.25]))[0] == 0

    def test_unanimity(self):
        mc = np.array([[2, 2, 2]])
        assert combine_votes(mc, 3)[0] == 2
        assert combine_votes(mc, 3, "weighted", np.array([0.2, 0.5, 0.3]))[0] == 2

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.01, 10), min_size=3, max_size=3), st.floats(0.01, 100),
           st.lists(st.integers(0, 3), min_size=3, max_size=3))
    def test_weight_scale_invariance(self, raw, k, classes):
        w = np.array(raw) / np.sum(raw)
        ws = np.array(raw) * k / np.sum(np.array(raw) * k)
        mc = np.array([classes])
        assert combine_votes(mc, 4, "weighted", w)[0] == combine_votes(mc, 4, "weighted", ws)[0]

    def test_weights(self):
        np.testing.assert_allclose(weights_from_accuracies([0.9, 0.9, 0.9]), [1 / 3] * 3)
        np.testing.assert_allclose(weights_from_accuracies([1.0, 0.5, 0.5]), [0.5, 0.25, 0.25])
        np.testing.assert_allclose(weights_from_accuracies([0, 0, 0]), [1 / 3] * 3)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_weights_simplex(self, acc):
        w = weights_from_accuracies(acc)
        assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12

    def _members(self, d):
        return (train_gbt(d, GbtConfig(n_rounds=10)), train_forest(d, ForestConfig(n_trees=10)),
                train_logistic(d))

    def test_ensemble(self):
        d, _ = synthesize(40, 6, 3, 3, seed=3)
        members = self._members(d)
        ens = VotingEnsemble(members)
        cls, per = vote(ens, d.features)
        np.testing.assert_array_equal(per[:, 0], members[0].predict(d.features))
        np.testing.assert_array_equal(cls, combine_votes(per, 3))
        mean = np.mean([m.predict_proba(d.features) for m in members], axis=0)
        np.testing.assert_allclose(ens.predict_proba(d.features), mean)
        w = fit_vote_weights(members, d)
        wens = VotingEnsemble(members, "weighted", w)
        np.testing.assert_allclose(wens.predict_proba(d.features),
                                   sum(wi * m.predict_proba(d.features) for wi, m in zip(w, members)))

    def test_invalid(self):
        d, _ = synthesize(20, 3, 2, 2, seed=0)
        members = self._members(d)
        with pytest.raises(ValueError):
            VotingEnsemble(members, "soft")
        with pytest.raises(ValueError):
            VotingEnsemble(members, "weighted", np.array([0.5, 0.5, 0.5]))
        with pytest.raises(ValueError, match="untrained"):
            VotingEnsemble((members[0], None, members[2])).predict(d.features)


class TestSerialization:
    def test_roundtrip_all_kinds(self, tmp_path):
        d, _ = synthesize(30, 5, 3, 3, seed=1)
        tr, te = split(d, SplitSpec(0.7, seed=1))
        members = (train_gbt(tr, GbtConfig(n_rounds=5)), train_forest(tr, ForestConfig(n_trees=5)),
                   train_logistic(tr))
        models = list(members) + [VotingEnsemble(members),
                                  VotingEnsemble(members, "weighted", np.array([0.5, 0.3, 0.2]))]
        for i, m in enumerate(models):
            path = tmp_path / f"m{i}.json"
            save_model(m, path)
            back = load_model(path)
            np.testing.assert_array_equal(back.predict(te.features), m.predict(te.features))
            np.testing.assert_array_equal(back.predict_proba(te.features), m.predict_proba(te.features))

    def test_version_rejected(self):
        d = model_to_dict(LogisticModel(np.zeros((2, 1)), np.zeros(2)))
        d["version"] = 99
        with pytest.raises(ValueError, match="version"):
            model_from_dict(d)
        with pytest.raises(ValueError):
            model_from_dict({"format": "other"})
