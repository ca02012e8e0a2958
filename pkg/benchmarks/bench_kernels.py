"""Compiled kernels against the numpy fallback.

Times each kernel, then a whole-model fit per family with the kernel module
swapped, and checks the two backends agree on every output.

    python benchmarks/bench_kernels.py --rows 5000 --repeat 3
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from autoids._backend import get_kernels
from autoids.trees import LearnerSpec, boosting, fit, forest, predict_proba

FAMILIES = {
    "DT": {"max_depth": 12},
    "RF": {"n_estimators": 10, "max_depth": 12},
    "ET": {"n_estimators": 10, "max_depth": 12},
    "RGBT": {"n_estimators": 10, "max_depth": 6},
    "LGBT": {"n_estimators": 10, "max_depth": 8, "num_leaves": 64, "min_child_samples": 10},
    "OGBT": {"n_estimators": 10, "max_depth": 8, "depth": 6},
}


def make_data(n, d, k, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, k, n)
    X = rng.normal(size=(n, d)) + 0.7 * y[:, None] * rng.normal(size=d)
    return X, y


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(n, d, rng):
    nb = 64
    binned = np.ascontiguousarray(rng.integers(0, nb, size=(d, n)).astype(np.uint8))
    rows = np.arange(n, dtype=np.intp)
    g, h = rng.normal(size=n), rng.uniform(0.05, 0.25, size=n)
    n_thr = np.full(d, nb - 1, dtype=np.intp)
    codes = rng.integers(0, 16, size=n).astype(np.intp)
    X, y = make_data(n, d, 3)
    tree = fit(LearnerSpec("DT", {"max_depth": 14}), X, y).trees[0]
    Xt = np.ascontiguousarray(X.T)
    idx = np.arange(n, dtype=np.intp)

    def hist(k):
        return k.build_histogram(binned, rows, g, h, nb)

    return {
        "build_histogram": hist,
        "split_gains": lambda k: k.split_gains(hist(k), n_thr, 1.0, 1, 1e-3),
        "oblivious_level_gains": lambda k: k.oblivious_level_gains(binned, rows, codes, 16, g, h, nb, n_thr,
                                                                   1.0, 1, 1e-3),
        "apply_tree": lambda k: k.apply_tree(X, tree.feature, tree.threshold, tree.left, tree.right),
        "build_class_tree": lambda k: k.build_class_tree(Xt, y.astype(np.intp), idx.copy(), 3, 0, 14, 2, 1, d, False, np.uint64(1)),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=5000)
    p.add_argument("--features", type=int, default=20)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    py, cy = get_kernels("python"), get_kernels("compiled")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'compiled s':>12}{'python s':>12}{'speedup':>10}  match")
    for name, fn in kernel_cases(args.rows, args.features, rng).items():
        tc, tp = best_of(lambda: fn(cy), args.repeat), best_of(lambda: fn(py), args.repeat)
        print(f"{name:<24}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x  {same(fn(cy), fn(py))}")

    X, y = make_data(args.rows, args.features, 5, seed=1)
    print(f"\n{'model fit':<24}{'compiled s':>12}{'python s':>12}{'speedup':>10}  match")
    for family, params in FAMILIES.items():
        spec = LearnerSpec(family, params)
        results = {}
        for label, kern in (("compiled", cy), ("python", py)):
            forest.kernels = boosting.kernels = kern
            results[label] = (best_of(lambda: fit(spec, X, y, seed=3), args.repeat),
                              predict_proba(fit(spec, X, y, seed=3), X))
        forest.kernels = boosting.kernels = cy
        tc, tp = results["compiled"][0], results["python"][0]
        match = np.array_equal(results["compiled"][1], results["python"][1])
        print(f"{family:<24}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x  {match}")


if __name__ == "__main__":
    main()
