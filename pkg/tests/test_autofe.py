import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoids.autofe import (CvScore, average_importances, cross_validate, default_spec, project,
                            rank_learners, select_features, tune_learner)
from autoids.dataset import EncodedDataset, stratified_kfold_labels
from autoids.errors import ConfigError, DataError
from autoids.hpo import TpeConfig
from autoids.trees import FAMILIES, LearnerSpec, fit


def scores(f1s, seconds=None):
    seconds = seconds or {}
    return [CvScore(f, v, [v] * 5, seconds.get(f, 1.0)) for f, v in f1s.items()]


class TestRankLearners:
    def test_sort(self):
        s = scores({"DT": .990, "RF": .994, "ET": .991, "RGBT": .995, "LGBT": .996, "OGBT": .993})
        assert rank_learners(s) == ["LGBT", "RGBT", "RF"]

    def test_published_benchmark_outcome(self):
        # weighted F1 of the six families on the CICIDS2017 benchmark, with
        # the CatBoost-role OGBT and XGBoost-role RGBT
        s = scores({"DT": .99608, "RF": .99714, "ET": .99243, "RGBT": .99755, "LGBT": .99769, "OGBT": .99553})
        assert set(rank_learners(s)) == {"RF", "RGBT", "LGBT"}

    def test_tie_on_fit_time(self):
        s = scores({"DT": .9, "RF": .95, "ET": .95, "RGBT": .8, "LGBT": .99, "OGBT": .7},
                   {"RF": 3.0, "ET": 1.0})
        assert rank_learners(s) == ["LGBT", "ET", "RF"]

    def test_fixed_order_last_resort(self):
        s = scores(dict.fromkeys(FAMILIES, 0.5))
        assert rank_learners(s) == ["DT", "RF", "ET"]

    def test_duplicates(self):
        with pytest.raises(ConfigError):
            rank_learners(scores({"DT": .9}) * 2)

    def test_order_invariance(self):
        s = scores({"DT": .990, "RF": .994, "ET": .994, "RGBT": .995, "LGBT": .996, "OGBT": .993}, {"ET": 0.5})
        expected = rank_learners(s)
        for perm in itertools.permutations(s):
            assert rank_learners(list(perm)) == expected


class TestAverageImportances:
    def test_arithmetic(self):
        assert np.allclose(average_importances([1, 0], [0, 1], [1, 0]), [2 / 3, 1 / 3])

    def test_idempotent(self):
        v = np.array([0.2, 0.5, 0.3])
        assert np.allclose(average_importances(v, v, v), v)

    def test_zero_vector_dropped(self):
        assert np.allclose(average_importances([0, 0], [1, 0], [0, 1]), [0.5, 0.5])
        assert average_importances([0, 0], [0, 0], [0, 0]).tolist() == [0.0, 0.0]

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            average_importances([1, 0], [1, 0, 0], [1, 0])


class TestSelectFeatures:
    def test_prefix(self):
        sel = select_features([0.5, 0.3, 0.15, 0.05], 0.9)
        assert sel.selected == [0, 1, 2] and sel.cumulative == pytest.approx(0.95)

    def test_unordered_input(self):
        sel = select_features([0.05, 0.3, 0.5, 0.15], 0.9)
        assert sel.selected == [2, 1, 3]

    def test_single(self):
        assert select_features([1.0], 0.9).selected == [0]

    def test_alpha_one_keeps_nonzero(self):
        assert select_features([0.6, 0.0, 0.4, 0.0], 1.0).selected == [0, 2]

    def test_ties_lower_index_first(self):
        assert select_features([0.25, 0.25, 0.25, 0.25], 0.5).selected == [0, 1]

    def test_all_zero_fallback(self):
        sel = select_features([0.0, 0.0, 0.0], 0.9)
        assert sel.fallback and sel.selected == [0, 1, 2]

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.01])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ConfigError):
            select_features([0.5, 0.5], alpha)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_threshold_and_monotone(self, raw, a1, a2):
        v = np.asarray(raw)
        if v.sum() <= 0:
            return
        v = v / v.sum()
        lo, hi = sorted((a1, a2))
        s_lo, s_hi = select_features(v, lo), select_features(v, hi)
        for s in (s_lo, s_hi):
            assert s.fallback or s.cumulative >= s.alpha - 1e-9 or len(s.selected) == np.count_nonzero(v)
            assert len(set(s.selected)) == len(s.selected)
        assert len(s_hi.selected) >= len(s_lo.selected)


class TestProject:
    def make(self):
        X = np.arange(20, dtype=float).reshape(5, 4)
        return EncodedDataset(X, np.zeros(5, dtype=int), ["a"], ["w", "x", "y", "z"])

    def test_shape_and_names(self):
        ds = project(self.make(), select_features([0.1, 0.5, 0.0, 0.4], 0.9))
        assert ds.features.shape == (5, 2)
        assert ds.feature_names == ["x", "z"]
        assert ds.features[:, 1].tolist() == [3.0, 7.0, 11.0, 15.0, 19.0]

    def test_all_features_identity_up_to_order(self):
        base = self.make()
        ds = project(base, select_features([0.1, 0.2, 0.3, 0.4], 1.0))
        for j, name in enumerate(ds.feature_names):
            assert np.array_equal(ds.features[:, j], base.features[:, base.feature_names.index(name)])

    def test_model_width_matches_selection(self, blobs):
        X, y = blobs
        ds = EncodedDataset(X, y, ["a", "b", "c"], list("pqrs"))
        sel = select_features([0.7, 0.25, 0.05, 0.0], 0.9)
        sub = project(ds, sel)
        assert fit(LearnerSpec("DT"), sub.features, sub.labels).n_features == len(sel.selected)


def test_default_spec_is_midpoint():
    assert default_spec("RF").params["n_estimators"] == 275
    assert default_spec("RF", {"n_estimators": [20, 40]}).params["n_estimators"] == 30


def test_cross_validate_and_tune(blobs):
    X, y = blobs
    folds = stratified_kfold_labels(y, 3, seed=0)
    cv = cross_validate(LearnerSpec("DT", {"max_depth": 5}), X, y, 3, folds)
    assert len(cv.fold_f1) == 3 and cv.mean_f1 == pytest.approx(np.mean(cv.fold_f1))
    spec, res = tune_learner("DT", X, y, 3, folds, 4, TpeConfig(n_startup=2, seed=1))
    assert len(res.history) == 4 and spec.params == res.best.config
