import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoids import trees
from autoids.errors import ConfigError, DataError
from autoids.trees import LearnerSpec, entropy, feature_importances, fit, gini, predict, predict_proba
from autoids.trees.boosting import cross_entropy, leaf_weight, softmax, softmax_grad_hess
from autoids.trees.forest import bootstrap_indices
from oracles import check_split_oracle, numeric_grad_hess

SMALL = {
    "DT": {"max_depth": 6},
    "RF": {"n_estimators": 8, "max_depth": 6},
    "ET": {"n_estimators": 8, "max_depth": 6},
    "RGBT": {"n_estimators": 8, "max_depth": 4, "learning_rate": 0.3},
    "LGBT": {"n_estimators": 8, "max_depth": 4, "learning_rate": 0.3, "num_leaves": 8, "min_child_samples": 2},
    "OGBT": {"n_estimators": 8, "max_depth": 4, "learning_rate": 0.3, "depth": 3},
}


class TestImpurity:
    def test_gini_values(self):
        assert gini([0.5, 0.5]) == 0.5
        assert gini([1.0, 0.0]) == 0.0
        assert gini([0.7, 0.2, 0.1]) == pytest.approx(0.46, abs=1e-12)

    def test_entropy_values(self):
        assert entropy([0.5, 0.5]) == 1.0
        assert entropy([1.0, 0.0]) == 0.0
        assert entropy([0.25] * 4) == 2.0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**31))
    def test_bounds_on_simplex(self, K, seed):
        p = np.random.default_rng(seed).dirichlet(np.ones(K))
        assert 0.0 <= gini(p) <= 1 - 1 / K + 1e-12
        assert 0.0 <= entropy(p) <= math.log2(K) + 1e-12
        assert gini(p) > 0 and entropy(p) > 0

    def test_zero_iff_one_hot(self):
        for K in (2, 3, 5):
            e = np.eye(K)[K - 1]
            assert gini(e) == 0.0 and entropy(e) == 0.0


class TestDecisionTree:
    def test_xor_depth_two(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        y = np.array([0, 1, 1, 0])
        model = fit(LearnerSpec("DT", {"max_depth": 2}), X, y)
        assert (predict(model, X) == y).all()

    def test_single_class_single_leaf(self):
        X = np.random.default_rng(0).normal(size=(10, 3))
        model = fit(LearnerSpec("DT"), X, np.ones(10, dtype=int), n_classes=3)
        assert model.trees[0].n_nodes == 1
        assert model.trees[0].value[0].tolist() == [0.0, 1.0, 0.0]

    def test_midpoint_split_and_decrease(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0, 0, 1, 1])
        model = fit(LearnerSpec("DT", {"max_depth": 1}), X, y)
        tree = model.trees[0]
        assert (tree.feature[0], tree.threshold[0]) == (0, 2.5)
        # root gini 0.5, both children pure
        assert tree.value[tree.left[0]].tolist() == [1.0, 0.0]

    def test_split_oracle(self):
        assert check_split_oracle(60, seed=1) == []

    def test_respects_max_depth(self, blobs):
        X, y = blobs
        assert fit(LearnerSpec("DT", {"max_depth": 2}), X, y).trees[0].depth() <= 2

    def test_empty_training_set(self):
        with pytest.raises(DataError):
            fit(LearnerSpec("DT"), np.zeros((0, 2)), np.zeros(0, dtype=int))

    def test_importance_single_feature(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 4))
        y = (X[:, 2] > 0).astype(int)
        imp = feature_importances(fit(LearnerSpec("DT", {"max_depth": 1}), X, y))
        assert imp.tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_unsplit_importance_zero(self):
        model = fit(LearnerSpec("DT"), np.zeros((5, 3)), np.zeros(5, dtype=int))
        assert feature_importances(model).tolist() == [0.0, 0.0, 0.0]


class TestForests:
    def test_identity_bootstrap_matches_dt(self):
        rng = np.random.default_rng(5)
        n = 6
        X = rng.normal(size=(n, 1))
        y = np.array([0, 1, 0, 1, 1, 0])
        seed = next(s for s in range(5000) if np.array_equal(np.sort(bootstrap_indices(n, s, 0)), np.arange(n)))
        rf = fit(LearnerSpec("RF", {"n_estimators": 1}), X, y, seed=seed)
        dt = fit(LearnerSpec("DT"), X, y)
        grid = np.linspace(-3, 3, 101)[:, None]
        assert np.array_equal(predict_proba(rf, grid), predict_proba(dt, grid))

    @pytest.mark.parametrize("family", ["RF", "ET"])
    def test_separable_blobs(self, family):
        rng = np.random.default_rng(1)
        y = np.repeat([0, 1], 100)
        X = rng.normal(size=(200, 2)) + y[:, None] * 8.0
        model = fit(LearnerSpec(family, {"n_estimators": 200}), X[::2], y[::2])
        assert (predict(model, X[1::2]) == y[1::2]).all()

    def test_stump_forest_equal_importances(self):
        # two identical binary columns plus two constant ones: every possible
        # split has the same gain, so trees differ only in the feature drawn
        y = np.array([0, 1] * 10)
        X = np.column_stack([y, y, np.zeros(20), np.zeros(20)]).astype(float)
        spec = LearnerSpec("ET", {"n_estimators": 2, "max_depth": 1})
        for seed in range(500):
            model = fit(spec, X, y, seed=seed)
            used = sorted(int(t.feature[0]) for t in model.trees)
            if used == [0, 1]:
                break
        else:
            pytest.fail("no seed produced one stump per informative feature")
        assert feature_importances(model).tolist() == [0.5, 0.5, 0.0, 0.0]

    def test_thread_count_independent(self, blobs, monkeypatch):
        X, y = blobs
        spec = LearnerSpec("RF", {"n_estimators": 6})
        monkeypatch.setenv("AUTOIDS_THREADS", "1")
        a = fit(spec, X, y, seed=3)
        monkeypatch.setenv("AUTOIDS_THREADS", "4")
        b = fit(spec, X, y, seed=3)
        assert np.array_equal(predict_proba(a, X), predict_proba(b, X))
        assert np.array_equal(a.importances, b.importances)

    def test_zero_estimators_rejected(self, blobs):
        with pytest.raises(ConfigError):
            fit(LearnerSpec("RF", {"n_estimators": 0}), *blobs)


class TestBoosting:
    def test_uniform_gradient(self):
        K, c = 4, 2
        g, h = softmax_grad_hess(np.zeros((1, K)), np.array([c]))
        expect = np.full(K, 1 / K)
        expect[c] -= 1
        assert np.allclose(g[0], expect, atol=1e-15)
        assert np.allclose(h[0], (1 / K) * (1 - 1 / K), atol=1e-15)

    def test_leaf_weight(self):
        assert leaf_weight(-2.0, 3.0) == 0.5

    @pytest.mark.parametrize("K", [2, 3, 5])
    def test_finite_differences(self, K):
        rng = np.random.default_rng(K)
        scores = rng.normal(size=(6, K))
        y = rng.integers(0, K, size=6)
        g, h = softmax_grad_hess(scores, y)
        ng, nh = numeric_grad_hess(scores, y)
        assert np.max(np.abs(g - ng) / np.maximum(np.abs(ng), 1e-6)) < 1e-4
        assert np.max(np.abs(h - nh) / np.maximum(np.abs(nh), 1e-6)) < 1e-4

    def test_zero_rounds_uniform(self, blobs):
        X, y = blobs
        model = fit(LearnerSpec("RGBT", {"n_estimators": 0}), X, y)
        assert np.allclose(predict_proba(model, X), 1 / 3, atol=1e-15)
        assert predict(model, X[:3]).tolist() == [0, 0, 0]

    @pytest.mark.parametrize("family", ["RGBT", "LGBT", "OGBT"])
    def test_loss_monotone_small_learning_rate(self, family, blobs):
        X, y = blobs
        params = dict(SMALL[family], n_estimators=50, learning_rate=0.1)
        if family == "RGBT":
            params["subsample"] = 1.0
        model = fit(LearnerSpec(family, params), X, y)
        from autoids.trees.boosting import _apply_scores

        losses = [cross_entropy(_apply_scores(model, X, r), y) for r in range(51)]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_oblivious_levels_share_split(self, blobs):
        X, y = blobs
        model = fit(LearnerSpec("OGBT", {"n_estimators": 5, "depth": 4, "max_depth": 10}), X, y)
        for tree in model.trees:
            depth = np.zeros(tree.n_nodes, dtype=int)
            for i in range(tree.n_nodes):
                if tree.left[i] >= 0:
                    depth[tree.left[i]] = depth[tree.right[i]] = depth[i] + 1
            for level in range(depth.max()):
                inner = (depth == level) & (tree.left >= 0)
                assert np.unique(tree.feature[inner]).size == 1
                assert np.unique(tree.threshold[inner]).size == 1

    def test_oblivious_depth_capped_by_max_depth(self, blobs):
        X, y = blobs
        model = fit(LearnerSpec("OGBT", {"n_estimators": 3, "depth": 8, "max_depth": 2}), X, y)
        assert max(t.depth() for t in model.trees) <= 2

    def test_single_class_rejected(self):
        with pytest.raises((DataError, ConfigError)):
            fit(LearnerSpec("LGBT"), np.zeros((4, 2)), np.zeros(4, dtype=int), n_classes=1)

    def test_softmax_rows(self):
        p = softmax(np.random.default_rng(0).normal(size=(5, 3)) * 50)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("family", list(SMALL))
def test_proba_rows_sum_to_one(family, blobs):
    X, y = blobs
    model = fit(LearnerSpec(family, SMALL[family]), X, y, seed=2)
    P = predict_proba(model, np.random.default_rng(9).normal(scale=5, size=(50, 4)))
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert (predict(model, X) == y).mean() > 0.9
    imp = feature_importances(model)
    assert imp.sum() == pytest.approx(1.0) and (imp >= 0).all()


@pytest.mark.parametrize("family", list(SMALL))
def test_deterministic_refit(family, blobs):
    X, y = blobs
    a = fit(LearnerSpec(family, SMALL[family]), X, y, seed=4)
    b = fit(LearnerSpec(family, SMALL[family]), X, y, seed=4)
    assert np.array_equal(predict_proba(a, X), predict_proba(b, X))


def test_dimension_mismatch(blobs):
    X, y = blobs
    model = fit(LearnerSpec("DT"), X, y)
    with pytest.raises(DataError):
        predict_proba(model, X[:, :2])
    assert predict_proba(model, np.zeros((0, 4))).shape == (0, 3)


class TestSpec:
    def test_unknown_family(self):
        with pytest.raises(ConfigError):
            LearnerSpec("SVM")

    def test_foreign_param(self):
        with pytest.raises(ConfigError):
            LearnerSpec("DT", {"learning_rate": 0.1})

    def test_out_of_bounds(self):
        with pytest.raises(ConfigError):
            LearnerSpec("RGBT", {"subsample": 0.0})

    def test_defaults_filled(self):
        assert set(LearnerSpec("OGBT").params) == set(trees.FAMILY_PARAMS["OGBT"])
