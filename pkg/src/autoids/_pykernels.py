"""Pure numpy implementations of the compiled kernels.

Used when the extension is unavailable or ``AUTOIDS_BACKEND=python``.
Results match ``_kernels`` exactly for gini trees, histograms and
traversal; entropy trees may differ in the last ulp of a gain.
"""
from __future__ import annotations

import numpy as np

GINI = 0
ENTROPY = 1
QUANTILE_CAP_DISTINCT = 10000
QUANTILE_BUCKETS = 256

_MASK = (1 << 64) - 1


class SplitMix64:
    """splitmix64 generator; the compiled builder consumes the same stream."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next() >> 11) * (1.0 / 9007199254740992.0)


def _impurity_rows(counts, n, criterion):
    # counts: (m, K); n: (m,). Sequential sum over classes to mirror the C loop.
    n = n.astype(np.float64)
    acc = np.zeros(counts.shape[0])
    if criterion == GINI:
        for k in range(counts.shape[1]):
            p = counts[:, k] / n
            acc = acc + p * p
        return 1.0 - acc
    for k in range(counts.shape[1]):
        c = counts[:, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            p = c / n
            term = np.where(c > 0, p * np.log2(np.where(c > 0, p, 1.0)), 0.0)
        acc = acc - term
    return acc


def build_class_tree(Xt, y, idx, n_classes, criterion, max_depth, min_samples_split,
                     min_samples_leaf, max_features, random_split, seed):
    d = Xt.shape[0]
    K = n_classes
    idx = np.asarray(idx)
    rng = SplitMix64(seed)

    feature, threshold, left, right, value, nsamp = [], [], [], [], [], []
    importance = np.zeros(d)
    stack = [(0, len(idx), 0, -1, False)]

    while stack:
        start, end, depth, parent, is_left = stack.pop()
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node

        rows = idx[start:end]
        n = end - start
        yk = y[rows]
        counts = np.bincount(yk, minlength=K).astype(np.float64)
        value.append(counts / float(n))
        nsamp.append(n)

        if (depth >= max_depth or n < min_samples_split or n < 2 * min_samples_leaf
                or counts.max() == float(n)):
            continue

        parent_imp = _impurity_rows(counts[None, :], np.array([n]), criterion)[0]

        if max_features < d:
            feats = list(range(d))
            for i in range(max_features):
                j = i + rng.next() % (d - i)
                feats[i], feats[j] = feats[j], feats[i]
            cand = sorted(feats[:max_features])
        else:
            cand = range(d)

        best_gain = -np.inf
        best_f = -1
        best_t = 0.0
        for f in cand:
            vals = Xt[f, rows]
            if random_split:
                mn = vals.min()
                mx = vals.max()
                if mx <= mn:
                    continue
                t = mn + rng.uniform() * (mx - mn)
                if t >= mx:
                    t = mn
                mask = vals <= t
                nl = int(mask.sum())
                if nl < min_samples_leaf or n - nl < min_samples_leaf:
                    continue
                lc = np.bincount(yk[mask], minlength=K).astype(np.float64)
                rc = counts - lc
                gain = (
                    parent_imp
                    - (nl / n) * _impurity_rows(lc[None, :], np.array([nl]), criterion)[0]
                    - ((n - nl) / n) * _impurity_rows(rc[None, :], np.array([n - nl]), criterion)[0]
                )
                if gain > best_gain:
                    best_gain, best_f, best_t = gain, f, t
                continue

            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            if sv[-1] <= sv[0]:
                continue
            sy = yk[order]
            onehot = np.zeros((n, K))
            onehot[np.arange(n), sy] = 1.0
            lcum = np.cumsum(onehot, axis=0)[:-1]
            boundary = sv[:-1] < sv[1:]
            nd = int(boundary.sum()) + 1
            rank = np.cumsum(boundary)
            nl = np.arange(1, n)
            ok = boundary & (nl >= min_samples_leaf) & (n - nl >= min_samples_leaf)
            if nd > QUANTILE_CAP_DISTINCT:
                ok &= ((rank - 1) * QUANTILE_BUCKETS) // nd != (rank * QUANTILE_BUCKETS) // nd
            pos = np.flatnonzero(ok)
            if pos.size == 0:
                continue
            lc = lcum[pos]
            rc = counts[None, :] - lc
            nlp = nl[pos]
            gains = (
                parent_imp
                - (nlp / n) * _impurity_rows(lc, nlp, criterion)
                - ((n - nlp) / n) * _impurity_rows(rc, n - nlp, criterion)
            )
            g = int(np.argmax(gains))
            if gains[g] > best_gain:
                best_gain = gains[g]
                best_f = f
                i = pos[g]
                a, b = sv[i], sv[i + 1]
                t = (a + b) / 2.0
                if t >= b:
                    t = a
                best_t = t

        if best_f < 0:
            continue
        feature[node] = best_f
        threshold[node] = best_t
        importance[best_f] += n * best_gain
        mask = Xt[best_f, rows] <= best_t
        idx[start:end] = np.concatenate([rows[mask], rows[~mask]])
        mid = start + int(mask.sum())
        stack.append((mid, end, depth + 1, node, False))
        stack.append((start, mid, depth + 1, node, True))

    return (
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(value, dtype=np.float64).reshape(len(feature), K),
        np.asarray(nsamp, dtype=np.int64),
        importance,
    )


def build_histogram(binned_t, rows, grad, hess, n_bins):
    d = binned_t.shape[0]
    hist = np.zeros((d, n_bins, 3))
    g = grad[rows]
    h = hess[rows]
    for f in range(d):
        b = binned_t[f, rows]
        hist[f, :, 0] = np.bincount(b, weights=g, minlength=n_bins)
        hist[f, :, 1] = np.bincount(b, weights=h, minlength=n_bins)
        hist[f, :, 2] = np.bincount(b, minlength=n_bins)
    return hist


def split_gains(hist, n_thresholds, reg_lambda, min_child_samples, min_child_weight):
    d, nb, _ = hist.shape
    gains = np.full((d, max(nb - 1, 1)), -np.inf)
    cum = np.cumsum(hist, axis=1)
    for f in range(d):
        G, H, C = cum[f, -1]
        m = int(n_thresholds[f])
        if m == 0:
            continue
        gl, hl, cl = cum[f, :m, 0], cum[f, :m, 1], cum[f, :m, 2]
        gr, hr, cr = G - gl, H - hl, C - cl
        ok = ((cl >= min_child_samples) & (cr >= min_child_samples)
              & (hl >= min_child_weight) & (hr >= min_child_weight))
        parent = G * G / (H + reg_lambda)
        g = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent)
        gains[f, :m] = np.where(ok, g, -np.inf)
    return gains


def oblivious_level_gains(binned_t, rows, codes, n_leaves, grad, hess, n_bins, n_thresholds,
                          reg_lambda, min_child_samples, min_child_weight):
    d = binned_t.shape[0]
    width = max(n_bins - 1, 1)
    total = np.full((d, width), -np.inf)
    g = grad[rows]
    h = hess[rows]
    size = n_leaves * n_bins
    for f in range(d):
        m = int(n_thresholds[f])
        if m == 0:
            continue
        key = codes * n_bins + binned_t[f, rows]
        shape = (n_leaves, n_bins)
        cg = np.cumsum(np.bincount(key, g, size).reshape(shape), axis=1)
        ch = np.cumsum(np.bincount(key, h, size).reshape(shape), axis=1)
        cc = np.cumsum(np.bincount(key, None, size).reshape(shape), axis=1)
        G, H, C = cg[:, -1:], ch[:, -1:], cc[:, -1:]
        gl, hl, cl = cg[:, :m], ch[:, :m], cc[:, :m]
        gr, hr, cr = G - gl, H - hl, C - cl
        ok = ((cl >= min_child_samples) & (cr >= min_child_samples)
              & (hl >= min_child_weight) & (hr >= min_child_weight))
        parent = G * G / (H + reg_lambda)
        gain = np.where(ok, 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent), 0.0)
        acc = np.zeros(m)
        for row in gain:  # leaf order, as in the compiled loop
            acc += row
        total[f, :m] = acc
    return total


def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.intp)
    active = np.flatnonzero(left[node] >= 0)
    while active.size:
        cur = node[active]
        go_left = X[active, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = active[left[node[active]] >= 0]
    return node
