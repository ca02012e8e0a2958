"""Learner ranking by cross-validated F1 and cumulative-importance feature selection."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import trees
from .dataset import EncodedDataset, FoldAssignment
from .errors import ConfigError, DataError
from .hpo import midpoint_config, model_space, restrict_space
from .metrics import weighted_f1
from .parallel import ordered_map
from .trees import FAMILIES, LearnerSpec


@dataclass(frozen=True)
class CvScore:
    family: str
    mean_f1: float
    fold_f1: list[float]
    mean_fit_seconds: float


@dataclass(frozen=True)
class FeatureSelection:
    selected: list[int]
    cumulative: float
    alpha: float
    fallback: bool = False
    importances: list[float] = field(default_factory=list)


def default_spec(family: str, space_overrides: dict | None = None) -> LearnerSpec:
    """Pre-tuning hyperparameters: the centre of the family's search space."""
    return LearnerSpec(family, midpoint_config(restrict_space(model_space(family), space_overrides)))


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(fold), 7]).generate_state(1)[0])


def cross_validate(spec: LearnerSpec, X, y, n_classes: int, folds: FoldAssignment, seed: int = 0,
                   workers: int | None = None) -> CvScore:
    """Weighted-F1 per fold; fold models are independent work units."""

    def run(fold):
        tr, te = folds.train_test(fold)
        t0 = time.perf_counter()
        model = trees.fit(spec, X[tr], y[tr], n_classes=n_classes, seed=fold_seed(seed, fold))
        elapsed = time.perf_counter() - t0
        return weighted_f1(y[te], trees.predict(model, X[te]), n_classes), elapsed

    out = ordered_map(run, range(folds.k), workers)
    f1s = [f for f, _ in out]
    return CvScore(spec.family, float(np.mean(f1s)), f1s, float(np.mean([s for _, s in out])))


def rank_learners(scores: list[CvScore], use_fit_time: bool = True) -> list[str]:
    """Top three families by mean F1; ties by fit time, then family order."""
    families = [s.family for s in scores]
    if len(set(families)) != len(families):
        raise ConfigError("duplicate families in score list")
    order = {f: i for i, f in enumerate(FAMILIES)}

    def key(s: CvScore):
        return (-s.mean_f1, s.mean_fit_seconds if use_fit_time else 0.0, order[s.family])

    return [s.family for s in sorted(scores, key=key)[:3]]


def average_importances(*vectors) -> np.ndarray:
    """Mean of the non-zero importance vectors, renormalized to sum one."""
    if not vectors:
        raise DataError("average_importances needs at least one vector")
    arrs = [np.asarray(v, dtype=np.float64) for v in vectors]
    if len({a.shape for a in arrs}) != 1:
        raise DataError("importance vectors differ in length")
    live = [a for a in arrs if a.sum() > 0]
    if not live:
        return np.zeros_like(arrs[0])
    mean = np.mean(live, axis=0)
    return mean / mean.sum()


def select_features(avg, alpha: float) -> FeatureSelection:
    """Shortest importance-descending prefix whose cumulative sum reaches ``alpha``."""
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    avg = np.asarray(avg, dtype=np.float64)
    if avg.sum() <= 0:
        return FeatureSelection(list(range(avg.size)), 0.0, alpha, True, avg.tolist())
    order = np.argsort(-avg, kind="stable")
    cum = np.cumsum(avg[order])
    hit = np.flatnonzero(cum >= alpha - 1e-12)
    k = int(hit[0]) if hit.size else int(np.count_nonzero(avg)) - 1
    return FeatureSelection([int(i) for i in order[:k + 1]], float(cum[k]), alpha, False, avg.tolist())


def project(ds: EncodedDataset, sel: FeatureSelection) -> EncodedDataset:
    cols = np.asarray(sel.selected, dtype=np.intp)
    if cols.size == 0 or cols.min() < 0 or cols.max() >= ds.n_features:
        raise DataError("feature selection index out of range")
    return EncodedDataset(
        ds.features[:, cols], ds.labels, ds.class_names, [ds.feature_names[i] for i in cols]
    )


def cumulative_curve(avg, sel: FeatureSelection, names: list[str]) -> list[dict]:
    avg = np.asarray(avg)
    order = np.argsort(-avg, kind="stable")
    cum = np.cumsum(avg[order])
    chosen = set(sel.selected)
    return [
        {"feature": names[i], "importance": float(avg[i]), "cumulative": float(c), "selected": int(i) in chosen}
        for i, c in zip(order, cum)
    ]


def tune_learner(family: str, X, y, n_classes: int, folds: FoldAssignment, max_evals: int,
                 tpe_cfg, seed: int = 0, workers: int | None = None, space_overrides: dict | None = None):
    """BO-TPE over ``model_space(family)`` minimizing ``1 - CV weighted F1``.

    Returns ``(best LearnerSpec, OptimizeResult)``.
    """
    from .hpo import optimize

    def objective(config):
        score = cross_validate(LearnerSpec(family, config), X, y, n_classes, folds, seed, workers)
        return 1.0 - score.mean_f1

    result = optimize(objective, restrict_space(model_space(family), space_overrides), max_evals, tpe_cfg)
    return LearnerSpec(family, result.best.config), result
