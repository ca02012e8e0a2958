"""Tree learners: DT, RF, ET and three gradient-boosting variants."""
from __future__ import annotations

import numpy as np

from ..errors import DataError
from .boosting import boosting_proba, fit_gbt
from .forest import fit_dt, fit_et, fit_rf, forest_proba
from .impurity import entropy, gini
from .model import BOOSTING, FAMILIES, FAMILY_PARAMS, LearnerSpec, TrainedModel, Tree

_FITTERS = {"DT": fit_dt, "RF": fit_rf, "ET": fit_et, "RGBT": fit_gbt, "LGBT": fit_gbt, "OGBT": fit_gbt}


def fit(spec: LearnerSpec, X, y, n_classes: int | None = None, seed: int = 0) -> TrainedModel:
    """Train the learner described by ``spec``."""
    return _FITTERS[spec.family](X, y, spec, n_classes=n_classes, seed=seed)


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    """Class-confidence matrix of shape (n, K); rows sum to one."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DataError(f"expected {model.n_features} feature columns, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros((0, model.n_classes))
    if model.is_boosting:
        return boosting_proba(model, X)
    return forest_proba(model, X)


def predict(model: TrainedModel, X) -> np.ndarray:
    """Arg-max class ids; ties go to the lowest class id."""
    return np.argmax(predict_proba(model, X), axis=1)


def feature_importances(model: TrainedModel) -> np.ndarray:
    """Normalized impurity-decrease (or split-gain) importances; all zero if unsplit."""
    return model.importances.copy()


__all__ = [
    "BOOSTING", "FAMILIES", "FAMILY_PARAMS", "LearnerSpec", "TrainedModel", "Tree",
    "entropy", "feature_importances", "fit", "fit_dt", "fit_et", "fit_gbt", "fit_rf",
    "gini", "predict", "predict_proba",
]
