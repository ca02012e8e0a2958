"""Deterministic synthetic flow table used for the desk-scale end-to-end run.

Five classes with a 100:1 majority/minority ratio. Each class is a Gaussian
blob on eight informative columns; the other columns are shared noise with
heavy tails, a constant column and a few non-finite cells so that loading
and sanitization are exercised too.
"""
from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

CLASS_NAMES = ("BENIGN", "DoS", "PortScan", "BruteForce", "Infiltration")
CLASS_COUNTS = (10_000, 6_000, 3_000, 900, 100)
N_FEATURES = 30
N_INFORMATIVE = 8


def make_fixture(seed: int = 2023, counts=CLASS_COUNTS, n_features: int = N_FEATURES,
                 separation: float = 1.8) -> tuple[np.ndarray, list[str], list[str]]:
    """Rows in shuffled order plus their label strings and feature names."""
    rng = np.random.default_rng(seed)
    K = len(counts)
    centres = rng.normal(0.0, separation, size=(K, N_INFORMATIVE))
    blocks, labels = [], []
    for c, n in enumerate(counts):
        inf = centres[c] + rng.normal(size=(n, N_INFORMATIVE)) * rng.uniform(0.6, 1.2, N_INFORMATIVE)
        noise = rng.standard_t(3, size=(n, n_features - N_INFORMATIVE))
        blocks.append(np.hstack([inf, noise]))
        labels += [c] * n
    X = np.vstack(blocks)
    y = np.asarray(labels)
    # flow-like magnitudes on a few columns
    X[:, :3] = np.exp(X[:, :3] / 2.0) * 100.0
    X[:, -1] = 1.0
    order = rng.permutation(X.shape[0])
    X, y = X[order], y[order]
    X[rng.choice(X.shape[0], 20, replace=False), N_INFORMATIVE] = np.nan
    X[rng.choice(X.shape[0], 5, replace=False), N_INFORMATIVE + 1] = np.inf
    names = [f"f{i:02d}" for i in range(n_features)]
    return X, [CLASS_NAMES[c] if c < len(CLASS_NAMES) else f"class{c}" for c in y], names


def write_fixture(path, seed: int = 2023, **kw) -> Path:
    X, labels, names = make_fixture(seed, **kw)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["Label"])
        for row, lab in zip(X, labels):
            w.writerow([repr(float(v)) if np.isfinite(v) else ("NaN" if np.isnan(v) else "Infinity")
                        for v in row] + [lab])
    return path


def fixture_config() -> dict:
    """Desk-scale pipeline settings tuned for the synthetic table on a small machine."""
    text = resources.files("autoids").joinpath("data/fixture_config.json").read_text(encoding="utf-8")
    return json.loads(text)
