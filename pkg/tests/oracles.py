"""Independent reference implementations used as test oracles."""
import numpy as np


def impurity(counts, criterion="gini"):
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    if criterion == "gini":
        return 1.0 - float(np.sum(p * p))
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def best_split_bruteforce(X, y, K, criterion="gini", min_samples_leaf=1):
    """Exhaustive (feature, midpoint threshold) search by weighted impurity decrease.

    Returns (gain, feature, threshold) or None when no split exists.
    """
    n, d = X.shape
    parent = impurity(np.bincount(y, minlength=K).astype(float), criterion)
    best = None
    for f in range(d):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = (a + b) / 2.0
            if t >= b:
                t = a
            left = X[:, f] <= t
            nl, nr = left.sum(), (~left).sum()
            if nl < min_samples_leaf or nr < min_samples_leaf:
                continue
            cl = np.bincount(y[left], minlength=K).astype(float)
            cr = np.bincount(y[~left], minlength=K).astype(float)
            gain = parent - (nl / n) * impurity(cl, criterion) - (nr / n) * impurity(cr, criterion)
            if best is None or gain > best[0]:
                best = (gain, f, t)
    return best


def split_gain(X, y, K, f, t, criterion="gini"):
    n = y.size
    left = X[:, f] <= t
    cl = np.bincount(y[left], minlength=K).astype(float)
    cr = np.bincount(y[~left], minlength=K).astype(float)
    parent = impurity(np.bincount(y, minlength=K).astype(float), criterion)
    return parent - left.sum() / n * impurity(cl, criterion) - (~left).sum() / n * impurity(cr, criterion)


def softmax_xent(scores, y):
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(y.size), y].sum()


def numeric_grad_hess(scores, y, h=1e-6, h2=1e-4):
    """Central differences of the summed cross-entropy: gradient and Hessian diagonal.

    The second difference uses a wider step ``h2``; its round-off grows as 1/h2**2.
    """
    g = np.zeros_like(scores)
    hd = np.zeros_like(scores)
    base = softmax_xent(scores, y)
    for idx in np.ndindex(scores.shape):
        up, down = scores.copy(), scores.copy()
        up[idx] += h
        down[idx] -= h
        g[idx] = (softmax_xent(up, y) - softmax_xent(down, y)) / (2 * h)
        up[idx] += h2 - h
        down[idx] -= h2 - h
        hd[idx] = (softmax_xent(up, y) - 2 * base + softmax_xent(down, y)) / (h2 * h2)
    return g, hd


def check_split_oracle(n_datasets=200, seed=0):
    """Count datasets where the fitted stump's gain differs from the exhaustive best."""
    from autoids.trees import LearnerSpec, fit

    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_datasets):
        n, d, K = int(rng.integers(2, 51)), int(rng.integers(1, 5)), int(rng.integers(2, 4))
        if rng.random() < 0.5:
            X = rng.integers(0, 5, size=(n, d)).astype(float)
        else:
            X = rng.normal(size=(n, d))
        y = rng.integers(0, K, size=n)
        criterion = "gini" if i % 2 == 0 else "entropy"
        model = fit(LearnerSpec("DT", {"max_depth": 1, "criterion": criterion}), X, y, n_classes=K)
        tree = model.trees[0]
        oracle = best_split_bruteforce(X, y, K, criterion)
        pure = np.unique(y).size == 1
        if oracle is None or pure:
            if tree.n_nodes != 1:
                failures.append(i)
            continue
        if tree.n_nodes == 1:
            failures.append(i)
            continue
        got = split_gain(X, y, K, int(tree.feature[0]), float(tree.threshold[0]), criterion)
        if abs(got - oracle[0]) > 1e-12:
            failures.append(i)
    return failures


def parzen_logpdf_reference(values, lo, hi, x, integer=False):
    """Truncated Gaussian mixture built from scipy's truncnorm.

    One kernel per distinct observation weighted by multiplicity plus a
    prior kernel centred on the domain with the full width as bandwidth.
    """
    from scipy.stats import truncnorm

    if integer:
        lo, hi = lo - 0.5, hi + 0.5
    uniq, mult = np.unique(np.asarray(values, dtype=float), return_counts=True)
    m = uniq.size
    kernels = []
    for i, mu in enumerate(uniq):
        left = mu - uniq[i - 1] if i > 0 else np.inf
        right = uniq[i + 1] - mu if i + 1 < m else np.inf
        nn = min(left, right) if m > 1 else 0.0
        kernels.append((mu, max(nn, (hi - lo) / min(100, m)), (m / (m + 1)) * mult[i] / mult.sum()))
    kernels.append(((lo + hi) / 2, hi - lo, 1 / (m + 1)))
    total = 0.0
    for mu, s, w in kernels:
        dist = truncnorm((lo - mu) / s, (hi - mu) / s, loc=mu, scale=s)
        total += w * (dist.cdf(x + 0.5) - dist.cdf(x - 0.5) if integer else dist.pdf(x))
    return float(np.log(total))


def tvae_gradient_error(params, x, eps, n_probe=40, h=1e-5, seed=0):
    """Worst relative error between analytic and central-difference TVAE gradients."""
    from autoids.autodp import loss_and_grads

    _, grads = loss_and_grads(params, x, eps)
    rng = np.random.default_rng(seed)
    worst = 0.0
    names = sorted(params)
    for _ in range(n_probe):
        name = names[rng.integers(len(names))]
        idx = tuple(rng.integers(s) for s in params[name].shape)
        old = params[name][idx]
        params[name][idx] = old + h
        up, _ = loss_and_grads(params, x, eps)
        params[name][idx] = old - h
        down, _ = loss_and_grads(params, x, eps)
        params[name][idx] = old
        numeric = (up - down) / (2 * h)
        analytic = grads[name][idx]
        scale = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst
