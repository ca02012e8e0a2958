# cython: language_level=3
"""Compiled hot loops for tree construction and traversal.

Every routine here has a numpy twin in ``_pykernels`` with the same
semantics; ``autoids._backend`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log2
from libc.stdint cimport uint64_t, uint8_t

cnp.import_array()

ctypedef cnp.float64_t DOUBLE
ctypedef cnp.intp_t INTP

cdef int GINI = 0
cdef int ENTROPY = 1
cdef double NEG_INF = -np.inf
cdef int QUANTILE_CAP_DISTINCT = 10000
cdef int QUANTILE_BUCKETS = 256


# ---------------------------------------------------------------------------
# splitmix64 stream shared bit-for-bit with the python fallback
# ---------------------------------------------------------------------------

cdef inline uint64_t _splitmix(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t* state) noexcept nogil:
    return <double>(_splitmix(state) >> 11) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# introsort on (key, payload) pairs
# ---------------------------------------------------------------------------

cdef inline void _swap(double* v, INTP* s, INTP i, INTP j) noexcept nogil:
    v[i], v[j] = v[j], v[i]
    s[i], s[j] = s[j], s[i]


cdef inline double _median3(double* v, INTP n) noexcept nogil:
    cdef double a = v[0], b = v[n // 2], c = v[n - 1]
    if a < b:
        if b < c:
            return b
        elif a < c:
            return c
        return a
    elif b < c:
        if a < c:
            return a
        return c
    return b


cdef void _sift_down(double* v, INTP* s, INTP start, INTP end) noexcept nogil:
    cdef INTP child, maxind, root = start
    while True:
        child = root * 2 + 1
        maxind = root
        if child < end and v[maxind] < v[child]:
            maxind = child
        if child + 1 < end and v[maxind] < v[child + 1]:
            maxind = child + 1
        if maxind == root:
            break
        _swap(v, s, root, maxind)
        root = maxind


cdef void _heapsort(double* v, INTP* s, INTP n) noexcept nogil:
    cdef INTP start = (n - 2) // 2, end = n
    while True:
        _sift_down(v, s, start, n)
        if start == 0:
            break
        start -= 1
    end = n - 1
    while end > 0:
        _swap(v, s, 0, end)
        _sift_down(v, s, 0, end)
        end -= 1


cdef void _introsort(double* v, INTP* s, INTP n, int maxd) noexcept nogil:
    cdef double pivot, tmp
    cdef INTP i, l, r, j
    while n > 1:
        if n <= 16:
            for i in range(1, n):
                tmp = v[i]
                l = s[i]
                j = i
                while j > 0 and v[j - 1] > tmp:
                    v[j] = v[j - 1]
                    s[j] = s[j - 1]
                    j -= 1
                v[j] = tmp
                s[j] = l
            return
        if maxd <= 0:
            _heapsort(v, s, n)
            return
        maxd -= 1
        pivot = _median3(v, n)
        # three-way partition
        i = l = 0
        r = n
        while i < r:
            if v[i] < pivot:
                _swap(v, s, i, l)
                i += 1
                l += 1
            elif v[i] > pivot:
                r -= 1
                _swap(v, s, i, r)
            else:
                i += 1
        _introsort(v, s, l, maxd)
        v += r
        s += r
        n -= r


cdef inline void _sort(double* v, INTP* s, INTP n) noexcept nogil:
    cdef int maxd = 0
    cdef INTP m = n
    while m > 1:
        m >>= 1
        maxd += 1
    _introsort(v, s, n, 2 * maxd)


# ---------------------------------------------------------------------------
# impurity from class counts
# ---------------------------------------------------------------------------

cdef inline double _impurity(const double* counts, int K, double n, int criterion) noexcept nogil:
    cdef double acc = 0.0, p
    cdef int k
    if criterion == GINI:
        for k in range(K):
            p = counts[k] / n
            acc = acc + p * p
        return 1.0 - acc
    for k in range(K):
        if counts[k] > 0.0:
            p = counts[k] / n
            acc = acc - p * log2(p)
    return acc


# ---------------------------------------------------------------------------
# classification tree builder (DT / RF / ET)
# ---------------------------------------------------------------------------

def build_class_tree(
    const DOUBLE[:, ::1] Xt,
    const INTP[::1] y,
    INTP[::1] idx,
    int n_classes,
    int criterion,
    int max_depth,
    int min_samples_split,
    int min_samples_leaf,
    int max_features,
    bint random_split,
    uint64_t seed,
):
    """Grow one classification tree depth-first.

    ``Xt`` is the feature-major (d, n) matrix; ``idx`` holds the sample
    indices of the root (duplicates allowed) and is permuted in place.
    Returns ``(feature, threshold, left, right, value, n_node_samples,
    importances)``.
    """
    cdef INTP d = Xt.shape[0]
    cdef INTP n_root = idx.shape[0]
    cdef INTP capacity = 2 * n_root + 1
    cdef int K = n_classes

    feature_a = np.full(capacity, -1, dtype=np.int32)
    threshold_a = np.zeros(capacity, dtype=np.float64)
    left_a = np.full(capacity, -1, dtype=np.int32)
    right_a = np.full(capacity, -1, dtype=np.int32)
    value_a = np.zeros((capacity, K), dtype=np.float64)
    nsamp_a = np.zeros(capacity, dtype=np.int64)
    imp_a = np.zeros(d, dtype=np.float64)
    cdef int[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int[::1] left = left_a
    cdef int[::1] right = right_a
    cdef double[:, ::1] value = value_a
    cdef long long[::1] nsamp = nsamp_a
    cdef double[::1] importance = imp_a

    vals_a = np.empty(n_root, dtype=np.float64)
    samp_a = np.empty(n_root, dtype=np.intp)
    cdef double[::1] vals = vals_a
    cdef INTP[::1] samp = samp_a
    cdef double[::1] counts = np.zeros(K, dtype=np.float64)
    cdef double[::1] lcounts = np.zeros(K, dtype=np.float64)
    cdef double[::1] rcounts = np.zeros(K, dtype=np.float64)
    cdef INTP[::1] feats = np.arange(d, dtype=np.intp)
    cdef INTP[::1] cand = np.empty(d, dtype=np.intp)

    # explicit DFS stack: start, end, depth, parent, is_left
    stack_a = np.empty((capacity, 5), dtype=np.intp)
    cdef INTP[:, ::1] stack = stack_a
    cdef INTP top = 0
    cdef INTP node_count = 0

    cdef uint64_t state = seed
    cdef INTP start, end, depth, parent, is_left, node, n, i, j, k, f, m, tmp
    cdef INTP best_f, best_pos, nl, nd, rank, n_cand
    cdef double parent_imp, best_gain, best_t, gain, t, mn, mx, u, a, b, maxc
    cdef bint is_leaf, capped

    stack[0, 0] = 0
    stack[0, 1] = n_root
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    top = 1

    with nogil:
        while top > 0:
            top -= 1
            start = stack[top, 0]
            end = stack[top, 1]
            depth = stack[top, 2]
            parent = stack[top, 3]
            is_left = stack[top, 4]
            node = node_count
            node_count += 1
            if parent >= 0:
                if is_left:
                    left[parent] = <int>node
                else:
                    right[parent] = <int>node

            n = end - start
            for k in range(K):
                counts[k] = 0.0
            for i in range(start, end):
                counts[y[idx[i]]] += 1.0
            maxc = 0.0
            for k in range(K):
                value[node, k] = counts[k] / <double>n
                if counts[k] > maxc:
                    maxc = counts[k]
            nsamp[node] = n

            is_leaf = (
                depth >= max_depth
                or n < min_samples_split
                or n < 2 * min_samples_leaf
                or maxc == <double>n
            )
            if is_leaf:
                continue

            parent_imp = _impurity(&counts[0], K, <double>n, criterion)

            # candidate features: partial Fisher-Yates, then ascending order
            if max_features < d:
                for i in range(d):
                    feats[i] = i
                for i in range(max_features):
                    j = i + <INTP>(_splitmix(&state) % <uint64_t>(d - i))
                    tmp = feats[i]
                    feats[i] = feats[j]
                    feats[j] = tmp
                n_cand = max_features
                for i in range(n_cand):
                    cand[i] = feats[i]
                # insertion sort of the small candidate list
                for i in range(1, n_cand):
                    tmp = cand[i]
                    j = i
                    while j > 0 and cand[j - 1] > tmp:
                        cand[j] = cand[j - 1]
                        j -= 1
                    cand[j] = tmp
            else:
                n_cand = d
                for i in range(d):
                    cand[i] = i

            best_gain = NEG_INF
            best_f = -1
            best_t = 0.0

            for m in range(n_cand):
                f = cand[m]
                for i in range(n):
                    samp[i] = idx[start + i]
                    vals[i] = Xt[f, samp[i]]

                if random_split:
                    mn = vals[0]
                    mx = vals[0]
                    for i in range(1, n):
                        if vals[i] < mn:
                            mn = vals[i]
                        if vals[i] > mx:
                            mx = vals[i]
                    if mx <= mn:
                        continue
                    u = _uniform(&state)
                    t = mn + u * (mx - mn)
                    if t >= mx:
                        t = mn
                    for k in range(K):
                        lcounts[k] = 0.0
                    nl = 0
                    for i in range(n):
                        if vals[i] <= t:
                            lcounts[y[samp[i]]] += 1.0
                            nl += 1
                    if nl < min_samples_leaf or n - nl < min_samples_leaf:
                        continue
                    for k in range(K):
                        rcounts[k] = counts[k] - lcounts[k]
                    gain = (
                        parent_imp
                        - (<double>nl / <double>n) * _impurity(&lcounts[0], K, <double>nl, criterion)
                        - (<double>(n - nl) / <double>n) * _impurity(&rcounts[0], K, <double>(n - nl), criterion)
                    )
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_t = t
                    continue

                _sort(&vals[0], &samp[0], n)
                if vals[n - 1] <= vals[0]:
                    continue
                nd = 1
                for i in range(n - 1):
                    if vals[i] < vals[i + 1]:
                        nd += 1
                capped = nd > QUANTILE_CAP_DISTINCT
                for k in range(K):
                    lcounts[k] = 0.0
                    rcounts[k] = counts[k]
                rank = 0
                for i in range(n - 1):
                    k = y[samp[i]]
                    lcounts[k] += 1.0
                    rcounts[k] -= 1.0
                    if vals[i] < vals[i + 1]:
                        rank += 1
                        nl = i + 1
                        if nl < min_samples_leaf or n - nl < min_samples_leaf:
                            continue
                        if capped and ((rank - 1) * QUANTILE_BUCKETS) // nd == (rank * QUANTILE_BUCKETS) // nd:
                            continue
                        gain = (
                            parent_imp
                            - (<double>nl / <double>n) * _impurity(&lcounts[0], K, <double>nl, criterion)
                            - (<double>(n - nl) / <double>n) * _impurity(&rcounts[0], K, <double>(n - nl), criterion)
                        )
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            a = vals[i]
                            b = vals[i + 1]
                            t = (a + b) / 2.0
                            if t >= b:
                                t = a
                            best_t = t

            if best_f < 0:
                continue

            feature[node] = <int>best_f
            threshold[node] = best_t
            importance[best_f] += <double>n * best_gain

            # in-place partition: x <= t to the front
            i = start
            j = end - 1
            while i <= j:
                if Xt[best_f, idx[i]] <= best_t:
                    i += 1
                else:
                    tmp = idx[i]
                    idx[i] = idx[j]
                    idx[j] = tmp
                    j -= 1
            # right pushed first so the left child is processed next
            stack[top, 0] = i
            stack[top, 1] = end
            stack[top, 2] = depth + 1
            stack[top, 3] = node
            stack[top, 4] = 0
            top += 1
            stack[top, 0] = start
            stack[top, 1] = i
            stack[top, 2] = depth + 1
            stack[top, 3] = node
            stack[top, 4] = 1
            top += 1

    return (
        feature_a[:node_count].copy(),
        threshold_a[:node_count].copy(),
        left_a[:node_count].copy(),
        right_a[:node_count].copy(),
        value_a[:node_count].copy(),
        nsamp_a[:node_count].copy(),
        imp_a,
    )


# ---------------------------------------------------------------------------
# gradient boosting histograms
# ---------------------------------------------------------------------------

def build_histogram(
    const uint8_t[:, ::1] binned_t,
    const INTP[::1] rows,
    const DOUBLE[::1] grad,
    const DOUBLE[::1] hess,
    int n_bins,
):
    """Per-feature (grad sum, hess sum, count) histograms over ``rows``.

    Returns a (d, n_bins, 3) array; accumulation follows row order.
    """
    cdef INTP d = binned_t.shape[0]
    cdef INTP n = rows.shape[0]
    hist_a = np.zeros((d, n_bins, 3), dtype=np.float64)
    cdef double[:, :, ::1] hist = hist_a
    cdef INTP f, i, r
    cdef uint8_t b
    with nogil:
        for f in range(d):
            for i in range(n):
                r = rows[i]
                b = binned_t[f, r]
                hist[f, b, 0] += grad[r]
                hist[f, b, 1] += hess[r]
                hist[f, b, 2] += 1.0
    return hist_a


def split_gains(
    const DOUBLE[:, :, ::1] hist,
    const INTP[::1] n_thresholds,
    double reg_lambda,
    double min_child_samples,
    double min_child_weight,
):
    """Second-order split gain for every (feature, threshold-bin) pair.

    gains[f, b] scores sending bins ``<= b`` left; invalid slots are -inf.
    """
    cdef INTP d = hist.shape[0]
    cdef INTP nb = hist.shape[1]
    gains_a = np.full((d, max(nb - 1, 1)), -np.inf, dtype=np.float64)
    cdef double[:, ::1] gains = gains_a
    cdef INTP f, b
    cdef double G, H, C, gl, hl, cl, gr, hr, cr, parent
    with nogil:
        for f in range(d):
            G = 0.0
            H = 0.0
            C = 0.0
            for b in range(nb):
                G = G + hist[f, b, 0]
                H = H + hist[f, b, 1]
                C = C + hist[f, b, 2]
            parent = G * G / (H + reg_lambda)
            gl = 0.0
            hl = 0.0
            cl = 0.0
            for b in range(n_thresholds[f]):
                gl = gl + hist[f, b, 0]
                hl = hl + hist[f, b, 1]
                cl = cl + hist[f, b, 2]
                gr = G - gl
                hr = H - hl
                cr = C - cl
                if cl < min_child_samples or cr < min_child_samples:
                    continue
                if hl < min_child_weight or hr < min_child_weight:
                    continue
                gains[f, b] = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent)
    return gains_a


# ---------------------------------------------------------------------------
# traversal
def oblivious_level_gains(
    const uint8_t[:, ::1] binned_t,
    const INTP[::1] rows,
    const INTP[::1] codes,
    INTP n_leaves,
    const DOUBLE[::1] grad,
    const DOUBLE[::1] hess,
    INTP n_bins,
    const INTP[::1] n_thresholds,
    double reg_lambda,
    double min_child_samples,
    double min_child_weight,
):
    """Split gain of one shared (feature, threshold-bin) summed over all leaves.

    ``codes[i]`` is the leaf of ``rows[i]``. Invalid per-leaf splits add 0;
    slots past a feature's threshold count are -inf. A leaf's gain is
    exactly zero below its lowest and from its highest occupied bin on (one
    child is empty), so only that bin range is touched.
    """
    cdef INTP d = binned_t.shape[0]
    cdef INTP n = rows.shape[0]
    cdef INTP width = max(n_bins - 1, 1)
    total_a = np.full((d, width), -np.inf, dtype=np.float64)
    hist_a = np.zeros((n_leaves, n_bins, 3), dtype=np.float64)
    lo_a = np.empty(n_leaves, dtype=np.intp)
    hi_a = np.empty(n_leaves, dtype=np.intp)
    cdef double[:, ::1] total = total_a
    cdef double[:, :, ::1] hist = hist_a
    cdef INTP[::1] lo = lo_a
    cdef INTP[::1] hi = hi_a
    cdef INTP f, i, l, b, m, r, top
    cdef double G, H, C, gl, hl, cl, gr, hr, cr, parent
    with nogil:
        for f in range(d):
            m = n_thresholds[f]
            if m == 0:
                continue
            for l in range(n_leaves):
                lo[l] = n_bins
                hi[l] = -1
            for i in range(n):
                b = binned_t[f, rows[i]]
                l = codes[i]
                if b < lo[l]:
                    lo[l] = b
                if b > hi[l]:
                    hi[l] = b
            for i in range(n):
                r = rows[i]
                b = binned_t[f, r]
                l = codes[i]
                hist[l, b, 0] = hist[l, b, 0] + grad[r]
                hist[l, b, 1] = hist[l, b, 1] + hess[r]
                hist[l, b, 2] = hist[l, b, 2] + 1.0
            for b in range(m):
                total[f, b] = 0.0
            for l in range(n_leaves):
                if hi[l] < 0:
                    continue
                G = 0.0
                H = 0.0
                C = 0.0
                for b in range(lo[l], hi[l] + 1):
                    G = G + hist[l, b, 0]
                    H = H + hist[l, b, 1]
                    C = C + hist[l, b, 2]
                parent = G * G / (H + reg_lambda)
                gl = 0.0
                hl = 0.0
                cl = 0.0
                top = hi[l] if hi[l] < m else m
                for b in range(lo[l], top):
                    gl = gl + hist[l, b, 0]
                    hl = hl + hist[l, b, 1]
                    cl = cl + hist[l, b, 2]
                    gr = G - gl
                    hr = H - hl
                    cr = C - cl
                    if cl < min_child_samples or cr < min_child_samples:
                        continue
                    if hl < min_child_weight or hr < min_child_weight:
                        continue
                    total[f, b] = total[f, b] + 0.5 * (
                        gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent)
                # reset only the touched range for the next feature
                for b in range(lo[l], hi[l] + 1):
                    hist[l, b, 0] = 0.0
                    hist[l, b, 1] = 0.0
                    hist[l, b, 2] = 0.0
    return total_a


# ---------------------------------------------------------------------------

def apply_tree(
    const DOUBLE[:, ::1] X,
    const int[::1] feature,
    const DOUBLE[::1] threshold,
    const int[::1] left,
    const int[::1] right,
):
    """Leaf index reached by every row of ``X``."""
    cdef INTP n = X.shape[0]
    out_a = np.empty(n, dtype=np.intp)
    cdef INTP[::1] out = out_a
    cdef INTP i
    cdef int node
    with nogil:
        for i in range(n):
            node = 0
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = node
    return out_a
