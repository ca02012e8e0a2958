import os
import subprocess
import sys

import numpy as np
import pytest

from autoids import _backend
from autoids._backend import get_kernels
from autoids.trees import LearnerSpec, feature_importances, fit, predict_proba
from autoids.trees import boosting, forest

py = get_kernels("python")
try:
    cy = get_kernels("compiled")
except ImportError:  # pragma: no cover - extension missing
    cy = None

needs_compiled = pytest.mark.skipif(cy is None, reason="compiled extension not built")

FAMILY_PARAMS = {
    "DT": {"max_depth": 8},
    "RF": {"n_estimators": 4, "max_depth": 8},
    "ET": {"n_estimators": 4, "max_depth": 8, "criterion": "entropy"},
    "RGBT": {"n_estimators": 4, "max_depth": 4, "subsample": 0.7, "gamma": 0.1},
    "LGBT": {"n_estimators": 4, "max_depth": 5, "num_leaves": 12, "min_child_samples": 3},
    "OGBT": {"n_estimators": 4, "max_depth": 6, "depth": 4},
}


def data(seed, n=300, d=5, K=3):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, K, n)
    X = rng.normal(size=(n, d)) + y[:, None] * 0.8
    X[:, 0] = np.round(X[:, 0])  # repeated values exercise tie handling
    return X, y


@needs_compiled
@pytest.mark.parametrize("family", list(FAMILY_PARAMS))
def test_models_identical_across_backends(family, monkeypatch):
    X, y = data(hash(family) % 1000)
    spec = LearnerSpec(family, FAMILY_PARAMS[family])
    fast = fit(spec, X, y, seed=5)
    monkeypatch.setattr(forest, "kernels", py)
    monkeypatch.setattr(boosting, "kernels", py)
    slow = fit(spec, X, y, seed=5)
    for a, b in zip(fast.trees, slow.trees):
        for field in ("feature", "threshold", "left", "right", "value"):
            assert np.array_equal(getattr(a, field), getattr(b, field)), field
    assert np.array_equal(feature_importances(fast), feature_importances(slow))
    assert np.array_equal(predict_proba(fast, X), predict_proba(slow, X))


@needs_compiled
@pytest.mark.parametrize("seed", range(20))
def test_histogram_and_gain_kernels(seed):
    rng = np.random.default_rng(seed)
    d, n, nb = int(rng.integers(1, 5)), int(rng.integers(5, 200)), int(rng.integers(2, 17))
    binned = np.ascontiguousarray(rng.integers(0, nb, size=(d, n)).astype(np.uint8))
    rows = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)).astype(np.intp)
    g, h = rng.normal(size=n), rng.uniform(0.01, 0.25, size=n)
    n_thr = rng.integers(0, nb, size=d).astype(np.intp)
    hp, hc = py.build_histogram(binned, rows, g, h, nb), cy.build_histogram(binned, rows, g, h, nb)
    assert np.array_equal(np.asarray(hp), np.asarray(hc))
    args = (n_thr, 1.0, int(rng.integers(0, 4)), 1e-3)
    assert np.array_equal(np.asarray(py.split_gains(hp, *args)), np.asarray(cy.split_gains(hc, *args)))
    leaves = int(rng.integers(1, 5))
    codes = rng.integers(0, leaves, size=rows.size).astype(np.intp)
    lv = (binned, rows, codes, leaves, g, h, nb, n_thr, 1.0, 1, 1e-3)
    assert np.array_equal(np.asarray(py.oblivious_level_gains(*lv)), np.asarray(cy.oblivious_level_gains(*lv)))


@needs_compiled
def test_apply_tree_kernels():
    X, y = data(3)
    tree = fit(LearnerSpec("DT", {"max_depth": 6}), X, y).trees[0]
    args = (np.ascontiguousarray(X), tree.feature, tree.threshold, tree.left, tree.right)
    assert np.array_equal(np.asarray(py.apply_tree(*args)), np.asarray(cy.apply_tree(*args)))


def test_backend_forced_by_environment():
    env = dict(os.environ, AUTOIDS_BACKEND="python")
    code = "from autoids._backend import BACKEND; print(BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_default_prefers_compiled():
    forced = os.environ.get("AUTOIDS_BACKEND", "auto") == "python"
    assert _backend.BACKEND == ("compiled" if cy is not None and not forced else "python")


def test_unknown_backend_name():
    with pytest.raises(ValueError):
        get_kernels("fortran")
