"""Histogram gradient boosting with a multiclass softmax objective.

Three growth policies share one driver:

* ``RGBT`` depth-wise trees, row subsampling and a ``gamma`` split penalty;
* ``LGBT`` leaf-wise trees capped by ``num_leaves`` with gradient-based
  one-side sampling (GOSS);
* ``OGBT`` oblivious trees, one (feature, threshold) per level.
"""
from __future__ import annotations

import heapq

import numpy as np

from .._backend import kernels
from ..errors import ConfigError, TrainingError
from .forest import _prepare
from .model import BOOSTING, LearnerSpec, TrainedModel, Tree

REG_LAMBDA = 1.0
MAX_BINS = 256
GOSS_TOP_RATE = 0.2
GOSS_OTHER_RATE = 0.1
# Minimum child hessian sum per family; RGBT follows the usual xgboost default.
MIN_CHILD_WEIGHT = {"RGBT": 1.0, "LGBT": 1e-3, "OGBT": 0.0}


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_grad_hess(scores: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient ``p - onehot`` and diagonal hessian ``p(1-p)`` of cross-entropy."""
    p = softmax(scores)
    g = p.copy()
    g[np.arange(len(y)), y] -= 1.0
    return g, p * (1.0 - p)


def cross_entropy(scores: np.ndarray, y: np.ndarray) -> float:
    z = scores - scores.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(len(y)), y]))


def leaf_weight(G: float, H: float, reg_lambda: float = REG_LAMBDA) -> float:
    return -G / (H + reg_lambda)


class Binner:
    """Per-feature thresholds and the uint8 bin codes of a training matrix.

    A value ``x`` falls in bin ``b`` iff ``t[b-1] < x <= t[b]``, so splitting
    at bin ``b`` is the same as the raw test ``x <= t[b]``.
    """

    def __init__(self, X: np.ndarray, max_bins: int = MAX_BINS):
        self.thresholds: list[np.ndarray] = []
        for f in range(X.shape[1]):
            col = X[:, f]
            uniq = np.unique(col)
            if uniq.size <= max_bins:
                a, b = uniq[:-1], uniq[1:]
                t = (a + b) / 2.0
                t = np.where(t >= b, a, t)
            else:
                q = np.quantile(col, np.arange(1, max_bins) / max_bins)
                t = np.unique(q)
                t = t[t < uniq[-1]]
            self.thresholds.append(t.astype(np.float64))
        self.n_thresholds = np.array([t.size for t in self.thresholds], dtype=np.intp)
        self.n_bins = int(self.n_thresholds.max(initial=0)) + 1
        self.binned_t = np.empty((X.shape[1], X.shape[0]), dtype=np.uint8)
        for f, t in enumerate(self.thresholds):
            self.binned_t[f] = np.searchsorted(t, X[:, f], side="left")


class _TreeBuilder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def build(self) -> Tree:
        return Tree(
            np.asarray(self.feature, dtype=np.int32),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int32),
            np.asarray(self.right, dtype=np.int32),
            np.asarray(self.value, dtype=np.float64).reshape(-1, 1),
        )


class _Grower:
    """Grows one regression tree on (gradient, hessian) statistics."""

    def __init__(self, binner: Binner, g, h, importance, min_child_samples, min_child_weight, gamma=0.0):
        self.binner = binner
        self.g = g
        self.h = h
        self.importance = importance
        self.mcs = float(min_child_samples)
        self.mcw = float(min_child_weight)
        self.gamma = gamma
        self.tb = _TreeBuilder()

    def hist(self, rows):
        return kernels.build_histogram(self.binner.binned_t, rows, self.g, self.h, self.binner.n_bins)

    def gains(self, hist):
        return kernels.split_gains(hist, self.binner.n_thresholds, REG_LAMBDA, self.mcs, self.mcw)

    def node(self, hist) -> int:
        G, H, _ = hist[0].sum(axis=0)
        return self.tb.add(leaf_weight(G, H))

    def best(self, hist):
        gains = self.gains(hist) - self.gamma
        flat = int(np.argmax(gains))
        f, b = divmod(flat, gains.shape[1])
        return gains[f, b], f, b

    def split(self, node, rows, hist, f, b, gain):
        """Partition ``rows``; histogram of the larger child by subtraction."""
        self.tb.feature[node] = f
        self.tb.threshold[node] = float(self.binner.thresholds[f][b])
        self.importance[f] += gain
        mask = self.binner.binned_t[f, rows] <= b
        lrows, rrows = rows[mask], rows[~mask]
        if lrows.size <= rrows.size:
            lh = self.hist(lrows)
            rh = hist - lh
        else:
            rh = self.hist(rrows)
            lh = hist - rh
        return (lrows, lh), (rrows, rh)

    def depthwise(self, rows, max_depth) -> Tree:
        root_hist = self.hist(rows)
        stack = [(rows, root_hist, 0, -1, False)]
        while stack:
            rows, hist, depth, parent, is_left = stack.pop()
            node = self.node(hist)
            if parent >= 0:
                if is_left:
                    self.tb.left[parent] = node
                else:
                    self.tb.right[parent] = node
            if depth >= max_depth or rows.size < 2:
                continue
            gain, f, b = self.best(hist)
            if not gain > 0.0:
                continue
            (lrows, lh), (rrows, rh) = self.split(node, rows, hist, f, b, gain)
            stack.append((rrows, rh, depth + 1, node, False))
            stack.append((lrows, lh, depth + 1, node, True))
        return self.tb.build()

    def leafwise(self, rows, max_depth, num_leaves) -> Tree:
        heap = []

        def push(node, rows, hist, depth):
            if depth >= max_depth or rows.size < 2:
                return
            gain, f, b = self.best(hist)
            if gain > 0.0:
                heapq.heappush(heap, (-gain, node, f, b, rows, hist, depth))

        root_hist = self.hist(rows)
        push(self.node(root_hist), rows, root_hist, 0)
        n_leaves = 1
        while heap and n_leaves < num_leaves:
            neg_gain, node, f, b, rows, hist, depth = heapq.heappop(heap)
            (lrows, lh), (rrows, rh) = self.split(node, rows, hist, f, b, -neg_gain)
            lnode = self.node(lh)
            rnode = self.node(rh)
            self.tb.left[node] = lnode
            self.tb.right[node] = rnode
            push(lnode, lrows, lh, depth + 1)
            push(rnode, rrows, rh, depth + 1)
            n_leaves += 1
        return self.tb.build()

    def oblivious(self, rows, depth) -> Tree:
        """Symmetric tree: one (feature, threshold) per level, chosen by the
        level gain summed over all current leaves (invalid splits count 0).

        Nodes use heap layout (children of ``i`` are ``2i+1``, ``2i+2``).
        """
        binned = self.binner.binned_t
        g, h = self.g[rows], self.h[rows]
        codes = np.zeros(rows.size, dtype=np.intp)
        levels: list[tuple[int, float]] = []
        G, H = [np.array([g.sum()])], [np.array([h.sum()])]
        for level in range(depth):
            # empty leaves add exactly zero gain, so only occupied ones are scanned
            occupied, dense = np.unique(codes, return_inverse=True)
            total = kernels.oblivious_level_gains(binned, rows, dense.astype(np.intp), occupied.size, self.g, self.h,
                                                  self.binner.n_bins, self.binner.n_thresholds, REG_LAMBDA,
                                                  self.mcs, self.mcw)
            f, b = divmod(int(np.argmax(total)), total.shape[1])
            gain = total[f, b]
            if not gain > 0.0:
                break
            self.importance[f] += gain
            levels.append((f, float(self.binner.thresholds[f][b])))
            codes = 2 * codes + (binned[f, rows] > b)
            width = 2 << level
            G.append(np.bincount(codes, g, width))
            H.append(np.bincount(codes, h, width))
        D = len(levels)
        n_nodes = (2 << D) - 1
        n_internal = (1 << D) - 1
        feature = np.full(n_nodes, -1, dtype=np.int32)
        threshold = np.zeros(n_nodes)
        left = np.full(n_nodes, -1, dtype=np.int32)
        right = np.full(n_nodes, -1, dtype=np.int32)
        for level, (f, t) in enumerate(levels):
            lo, hi = (1 << level) - 1, (2 << level) - 1
            feature[lo:hi] = f
            threshold[lo:hi] = t
        inner = np.arange(n_internal, dtype=np.int32)
        left[:n_internal] = 2 * inner + 1
        right[:n_internal] = 2 * inner + 2
        value = -np.concatenate(G) / (np.concatenate(H) + REG_LAMBDA)
        return Tree(feature, threshold, left, right, value.reshape(-1, 1))


def _goss_rows(g: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Rows kept by GOSS and per-row weights (0 for dropped rows)."""
    n = g.shape[0]
    magnitude = np.abs(g).sum(axis=1)
    order = np.argsort(-magnitude, kind="stable")
    n_top = int(GOSS_TOP_RATE * n)
    n_other = int(GOSS_OTHER_RATE * n)
    top = order[:n_top]
    rest = order[n_top:]
    other = rng.choice(rest, size=min(n_other, rest.size), replace=False) if rest.size else rest
    weights = np.zeros(n)
    weights[top] = 1.0
    weights[other] = (1.0 - GOSS_TOP_RATE) / GOSS_OTHER_RATE
    rows = np.sort(np.concatenate([top, other])).astype(np.intp)
    return rows, weights


def _apply_scores(model: TrainedModel, X: np.ndarray, rounds: int | None = None) -> np.ndarray:
    K = model.n_classes
    scores = np.tile(model.init_score, (X.shape[0], 1))
    n_trees = len(model.trees) if rounds is None else rounds * K
    for i in range(n_trees):
        tree = model.trees[i]
        leaves = kernels.apply_tree(X, tree.feature, tree.threshold, tree.left, tree.right)
        scores[:, i % K] += model.learning_rate * tree.value[leaves, 0]
    return scores


def fit_gbt(X, y, spec: LearnerSpec, n_classes: int | None = None, seed: int = 0) -> TrainedModel:
    """Shared boosting driver for the RGBT, LGBT and OGBT families."""
    if spec.family not in BOOSTING:
        raise ConfigError(f"fit_gbt given a {spec.family} spec")
    X, y, K = _prepare(X, y, n_classes)
    if K < 2:
        raise ConfigError("boosting needs at least 2 classes")
    p = spec.params
    family = spec.family
    n, d = X.shape
    binner = Binner(X)
    lr = p["learning_rate"]
    importance = np.zeros(d)
    init = np.zeros(K)
    scores = np.tile(init, (n, 1))
    all_rows = np.arange(n, dtype=np.intp)
    trees: list[Tree] = []
    for r in range(p["n_estimators"]):
        g, h = softmax_grad_hess(scores, y)
        if not (np.isfinite(g).all() and np.isfinite(h).all()):
            raise TrainingError(f"non-finite gradient in boosting round {r}")
        rng = np.random.default_rng([int(seed), r])
        weights = None
        rows = all_rows
        if family == "RGBT" and p["subsample"] < 1.0:
            m = max(1, int(round(p["subsample"] * n)))
            rows = np.sort(rng.choice(n, size=m, replace=False)).astype(np.intp)
        elif family == "LGBT":
            rows, weights = _goss_rows(g, rng)
        for k in range(K):
            gk = np.ascontiguousarray(g[:, k])
            hk = np.ascontiguousarray(h[:, k])
            if weights is not None:
                gk = gk * weights
                hk = hk * weights
            if family == "RGBT":
                grower = _Grower(binner, gk, hk, importance, 1, MIN_CHILD_WEIGHT[family], p["gamma"])
                tree = grower.depthwise(rows, p["max_depth"])
            elif family == "LGBT":
                grower = _Grower(binner, gk, hk, importance, p["min_child_samples"], MIN_CHILD_WEIGHT[family])
                tree = grower.leafwise(rows, p["max_depth"], p["num_leaves"])
            else:
                grower = _Grower(binner, gk, hk, importance, 0, MIN_CHILD_WEIGHT[family])
                tree = grower.oblivious(rows, min(p["depth"], p["max_depth"]))
            trees.append(tree)
            leaves = kernels.apply_tree(X, tree.feature, tree.threshold, tree.left, tree.right)
            scores[:, k] += lr * tree.value[leaves, 0]
    total = importance.sum()
    importances = importance / total if total > 0 else np.zeros(d)
    return TrainedModel(family, dict(p), d, K, trees, importances, learning_rate=lr, init_score=init, seed=seed)


def boosting_proba(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    return softmax(_apply_scores(model, X))
