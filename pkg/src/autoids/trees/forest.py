"""Decision tree, random forest and extra-trees classifiers."""
from __future__ import annotations

import math

import numpy as np

from .._backend import ENTROPY, GINI, kernels
from ..errors import ConfigError, DataError
from ..parallel import ordered_map
from .model import LearnerSpec, TrainedModel, Tree


def tree_streams(seed: int, index: int) -> tuple[int, np.random.Generator]:
    """Per-tree (splitmix seed, numpy generator) keyed by (seed, tree index)."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    state = int(ss.generate_state(1, np.uint64)[0])
    return state, np.random.default_rng(ss)


def bootstrap_indices(n: int, seed: int, index: int) -> np.ndarray:
    _, rng = tree_streams(seed, index)
    return rng.integers(0, n, size=n).astype(np.intp)


def _prepare(X, y, n_classes):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.intp)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("empty training set")
    if y.shape[0] != X.shape[0]:
        raise DataError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError("labels outside 0..K-1")
    return X, y, int(n_classes)


def _grow(Xt, y, idx, K, spec: LearnerSpec, max_features, random_split, state) -> tuple[Tree, np.ndarray]:
    p = spec.params
    out = kernels.build_class_tree(
        Xt, y, idx, K,
        GINI if p["criterion"] == "gini" else ENTROPY,
        p["max_depth"], p["min_samples_split"], p["min_samples_leaf"],
        max_features, random_split, np.uint64(state),
    )
    feature, threshold, left, right, value, _, importance = out
    return Tree(feature, threshold, left, right, value), importance


def _finish(family, spec, X, K, trees, importance, seed) -> TrainedModel:
    total = importance.sum()
    importances = importance / total if total > 0 else np.zeros_like(importance)
    return TrainedModel(family, dict(spec.params), X.shape[1], K, trees, importances, seed=seed)


def fit_dt(X, y, spec: LearnerSpec, n_classes: int | None = None, seed: int = 0) -> TrainedModel:
    if spec.family != "DT":
        raise ConfigError(f"fit_dt given a {spec.family} spec")
    X, y, K = _prepare(X, y, n_classes)
    Xt = np.ascontiguousarray(X.T)
    state, _ = tree_streams(seed, 0)
    tree, importance = _grow(Xt, y, np.arange(X.shape[0], dtype=np.intp), K, spec, X.shape[1], False, state)
    return _finish("DT", spec, X, K, [tree], importance, seed)


def _fit_ensemble(X, y, spec, n_classes, seed, bootstrap, random_split):
    X, y, K = _prepare(X, y, n_classes)
    n_trees = spec["n_estimators"]
    if n_trees < 1:
        raise ConfigError(f"{spec.family} needs n_estimators >= 1")
    n, d = X.shape
    Xt = np.ascontiguousarray(X.T)
    max_features = max(1, math.ceil(math.sqrt(d)))

    def grow(t):
        state, rng = tree_streams(seed, t)
        idx = rng.integers(0, n, size=n).astype(np.intp) if bootstrap else np.arange(n, dtype=np.intp)
        return _grow(Xt, y, idx, K, spec, max_features, random_split, state)

    grown = ordered_map(grow, range(n_trees))
    importance = np.zeros(d)
    for _, imp in grown:  # fixed reduction order
        importance += imp
    return _finish(spec.family, spec, X, K, [t for t, _ in grown], importance, seed)


def fit_rf(X, y, spec: LearnerSpec, n_classes: int | None = None, seed: int = 0) -> TrainedModel:
    if spec.family != "RF":
        raise ConfigError(f"fit_rf given a {spec.family} spec")
    return _fit_ensemble(X, y, spec, n_classes, seed, bootstrap=True, random_split=False)


def fit_et(X, y, spec: LearnerSpec, n_classes: int | None = None, seed: int = 0) -> TrainedModel:
    if spec.family != "ET":
        raise ConfigError(f"fit_et given a {spec.family} spec")
    return _fit_ensemble(X, y, spec, n_classes, seed, bootstrap=False, random_split=True)


def forest_proba(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    out = np.zeros((X.shape[0], model.n_classes))
    for tree in model.trees:
        leaves = kernels.apply_tree(X, tree.feature, tree.threshold, tree.left, tree.right)
        out += tree.value[leaves]
    out /= len(model.trees)
    return out
