"""Node impurity measures."""
from __future__ import annotations

import numpy as np


def gini(p) -> float:
    """Gini impurity ``1 - sum(p_i^2)`` of a class-probability vector."""
    p = np.asarray(p, dtype=np.float64)
    return float(1.0 - np.sum(p * p))


def entropy(p) -> float:
    """Shannon entropy in bits, with ``0 * log2(0) = 0``."""
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))
