"""Optimized confidence-based stacking: base-model class confidences feed a tuned meta-learner."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import trees
from .autofe import FeatureSelection, tune_learner
from .dataset import stratified_kfold_labels, stratified_subsample
from .errors import ConfigError, DataError
from .hpo import TpeConfig
from .parallel import ordered_map
from .trees import LearnerSpec, TrainedModel

MODES = ("out_of_fold", "paper_literal")

# stream tags so every fitted model draws from its own RNG stream
_FOLD, _FINAL, _META = 1, 2, 3


def unit_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, tags)]).generate_state(1)[0])


@dataclass
class StackedEnsemble:
    base_models: list[TrainedModel]
    meta_model: TrainedModel
    meta_family: str
    selected_features: FeatureSelection
    class_names: list[str]
    feature_names: list[str]
    meta_feature_mode: str = "out_of_fold"
    config: dict = field(default_factory=dict)

    @property
    def base_families(self) -> list[str]:
        return [m.family for m in self.base_models]

    @property
    def n_input_features(self) -> int:
        return len(self.feature_names)


def build_meta_features(models: list[TrainedModel], X) -> np.ndarray:
    """Concatenate each model's (n, c) confidence block in model order."""
    X = np.asarray(X, dtype=np.float64)
    widths = {m.n_features for m in models}
    if len(widths) != 1 or X.ndim != 2 or X.shape[1] not in widths:
        raise DataError(f"meta features need inputs of width {sorted(widths)}, got {X.shape}")
    return np.hstack([trees.predict_proba(m, X) for m in models])


@dataclass
class OcseTrace:
    """Training-time bookkeeping kept out of the persisted model."""

    oof_fold: np.ndarray | None
    fold_train_rows: list[np.ndarray] = field(default_factory=list)
    meta_features: np.ndarray | None = None
    meta_history: list = field(default_factory=list)
    meta_params: dict = field(default_factory=dict)

    def audit_out_of_fold(self) -> bool:
        """True iff no row's meta features came from a model trained on it."""
        if self.oof_fold is None:
            return False
        for f, rows in enumerate(self.fold_train_rows):
            if np.any(self.oof_fold[rows] == f):
                return False
        return bool(np.all(self.oof_fold >= 0))


def out_of_fold_meta(X, y, n_classes, base_specs, k, seed, workers=None):
    folds = stratified_kfold_labels(y, k, seed)
    n = X.shape[0]
    meta = np.zeros((n, len(base_specs) * n_classes))
    oof_fold = np.full(n, -1, dtype=np.intp)

    def run(fold):
        tr, te = folds.train_test(fold)
        blocks = []
        for j, spec in enumerate(base_specs):
            model = trees.fit(spec, X[tr], y[tr], n_classes=n_classes, seed=unit_seed(seed, _FOLD, j, fold))
            blocks.append(trees.predict_proba(model, X[te]))
        return tr, te, np.hstack(blocks)

    results = ordered_map(run, range(k), workers)
    train_rows = []
    for fold, (tr, te, block) in enumerate(results):
        meta[te] = block
        oof_fold[te] = fold
        train_rows.append(tr)
    return meta, oof_fold, train_rows


def train_ocse(X, y, n_classes: int, base_specs: list[LearnerSpec], best_family: str,
               selection: FeatureSelection, class_names: list[str], feature_names: list[str],
               meta_budget: int = 30, tpe_cfg: TpeConfig | None = None, k: int = 5, seed: int = 0,
               mode: str = "out_of_fold", workers: int | None = None, space_overrides: dict | None = None,
               tune_rows: int | None = None) -> tuple[StackedEnsemble, OcseTrace]:
    """Fit the stacked ensemble on the balanced, feature-selected training view.

    ``tune_rows`` caps the rows (class-proportional subsample) each meta
    HPO objective evaluation cross-validates on; the final meta-learner
    always trains on every meta-feature row.
    """
    if mode not in MODES:
        raise ConfigError(f"meta_feature_mode must be one of {MODES}")
    if len(base_specs) != 3:
        raise ConfigError("OCSE takes exactly three base learners")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    tpe_cfg = tpe_cfg or TpeConfig(seed=seed)

    final = ordered_map(
        lambda j: trees.fit(base_specs[j], X, y, n_classes=n_classes, seed=unit_seed(seed, _FINAL, j)),
        range(3), workers,
    )
    if mode == "out_of_fold":
        meta, oof_fold, train_rows = out_of_fold_meta(X, y, n_classes, base_specs, k, seed, workers)
    else:
        meta = build_meta_features(final, X)
        oof_fold, train_rows = None, []

    rows = stratified_subsample(y, tune_rows, unit_seed(seed, _META, 0))
    meta_folds = stratified_kfold_labels(y[rows], k, unit_seed(seed, _META, 1))
    meta_spec, result = tune_learner(best_family, meta[rows], y[rows], n_classes, meta_folds, meta_budget,
                                     tpe_cfg, unit_seed(seed, _META, 2), workers, space_overrides)
    meta_model = trees.fit(meta_spec, meta, y, n_classes=n_classes, seed=unit_seed(seed, _META))
    ensemble = StackedEnsemble(final, meta_model, best_family, selection, list(class_names),
                               list(feature_names), mode)
    trace = OcseTrace(oof_fold, train_rows, meta, result.history, dict(meta_spec.params))
    return ensemble, trace


def predict_ensemble(e: StackedEnsemble, X) -> tuple[np.ndarray, np.ndarray]:
    """Labels and meta-learner confidences for raw-width inputs."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != e.n_input_features:
        raise DataError(f"expected {e.n_input_features} input columns, got shape {X.shape}")
    K = len(e.class_names)
    if X.shape[0] == 0:
        return np.zeros(0, dtype=np.intp), np.zeros((0, K))
    Xs = np.ascontiguousarray(X[:, e.selected_features.selected])
    conf = trees.predict_proba(e.meta_model, build_meta_features(e.base_models, Xs))
    return np.argmax(conf, axis=1), conf
