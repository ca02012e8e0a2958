"""Learner specifications and trained-model containers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ConfigError

FAMILIES = ("DT", "RF", "ET", "RGBT", "LGBT", "OGBT")
BOOSTING = ("RGBT", "LGBT", "OGBT")
CRITERIA = ("gini", "entropy")

# (kind, lo, hi) per hyperparameter; bounds are inclusive and wider than the
# tuning ranges so fixtures can use e.g. zero boosting rounds.
PARAM_BOUNDS: dict[str, tuple[str, Any, Any]] = {
    "n_estimators": ("int", 0, 10_000),
    "max_depth": ("int", 1, 1_000),
    "min_samples_split": ("int", 2, 1_000_000),
    "min_samples_leaf": ("int", 1, 1_000_000),
    "criterion": ("cat", CRITERIA, None),
    "learning_rate": ("float", 0.0, 1.0),
    "gamma": ("float", 0.0, math.inf),
    "subsample": ("float", 0.0, 1.0),
    "num_leaves": ("int", 2, 1_000_000),
    "min_child_samples": ("int", 0, 1_000_000),
    "depth": ("int", 1, 16),
}

FAMILY_PARAMS: dict[str, tuple[str, ...]] = {
    "DT": ("max_depth", "min_samples_split", "min_samples_leaf", "criterion"),
    "RF": ("n_estimators", "max_depth", "min_samples_split", "min_samples_leaf", "criterion"),
    "ET": ("n_estimators", "max_depth", "min_samples_split", "min_samples_leaf", "criterion"),
    "RGBT": ("n_estimators", "max_depth", "learning_rate", "gamma", "subsample"),
    "LGBT": ("n_estimators", "max_depth", "learning_rate", "num_leaves", "min_child_samples"),
    "OGBT": ("n_estimators", "max_depth", "learning_rate", "depth"),
}

DEFAULT_PARAMS: dict[str, Any] = {
    "n_estimators": 100,
    "max_depth": 20,
    "min_samples_split": 2,
    "min_samples_leaf": 1,
    "criterion": "gini",
    "learning_rate": 0.1,
    "gamma": 0.0,
    "subsample": 1.0,
    "num_leaves": 31,
    "min_child_samples": 20,
    "depth": 6,
}


def _check_value(name: str, value: Any) -> Any:
    kind, lo, hi = PARAM_BOUNDS[name]
    if kind == "cat":
        if value not in lo:
            raise ConfigError(f"{name}={value!r} not in {lo}")
        return value
    if kind == "int":
        if isinstance(value, bool) or int(value) != value:
            raise ConfigError(f"{name}={value!r} must be an integer")
        value = int(value)
        if not lo <= value <= hi:
            raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")
        return value
    value = float(value)
    if name in ("learning_rate", "subsample"):
        ok = lo < value <= hi
    else:
        ok = lo <= value <= hi
    if not ok or not math.isfinite(value):
        raise ConfigError(f"{name}={value} outside bounds ({lo}, {hi}]")
    return value


@dataclass(frozen=True)
class LearnerSpec:
    """A learner family plus its hyperparameters (missing ones use defaults)."""

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown learner family {self.family!r}")
        allowed = FAMILY_PARAMS[self.family]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ConfigError(f"{self.family} does not take {sorted(unknown)}")
        checked = {name: _check_value(name, self.params.get(name, DEFAULT_PARAMS[name])) for name in allowed}
        object.__setattr__(self, "params", checked)

    def __getitem__(self, name: str) -> Any:
        return self.params[name]


@dataclass
class Tree:
    """Flat binary tree; ``left[i] == -1`` marks a leaf.

    ``value`` holds class distributions (n_nodes, K) for classification
    trees and leaf weights (n_nodes, 1) for boosting trees.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        # the traversal kernels take int32 indices and contiguous float64 buffers
        for name in ("feature", "left", "right"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int32))
        self.threshold = np.ascontiguousarray(self.threshold, dtype=np.float64)
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max()) if self.n_nodes else 0


@dataclass
class TrainedModel:
    family: str
    params: dict
    n_features: int
    n_classes: int
    trees: list[Tree]
    importances: np.ndarray
    learning_rate: float = 1.0
    init_score: np.ndarray | None = None
    seed: int = 0

    @property
    def is_boosting(self) -> bool:
        return self.family in BOOSTING

    @property
    def n_rounds(self) -> int:
        return len(self.trees) // self.n_classes if self.is_boosting else 0
