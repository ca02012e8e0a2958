"""End-to-end training, evaluation and prediction for the intrusion-detection engine.

Training runs four stages on the training split only: class balancing,
learner ranking and feature selection, per-learner tuning, and the stacked
ensemble. The holdout split is scored once at the end.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import trees
from ._backend import BACKEND
from .autodp import TvaeConfig, balance
from .autofe import (
    average_importances,
    cross_validate,
    cumulative_curve,
    default_spec,
    rank_learners,
    select_features,
    tune_learner,
)
from .dataset import (
    EncodedDataset,
    load_csv,
    sanitize_encode,
    stratified_kfold_labels,
    stratified_split,
    stratified_subsample,
)
from .ensemble import MODES, StackedEnsemble, predict_ensemble, train_ocse, unit_seed
from .errors import AutoIdsError, ConfigError, DataError, PersistenceError, StageError, TrainingError
from .hpo import Continuous, TpeConfig, best_so_far, optimize, trial_record
from .metrics import compute_metrics
from .parallel import n_workers
from .persistence import save_model
from .report import REPORT_SCHEMA_VERSION, jsonable, validate_report, write_report
from .trees import FAMILIES

log = logging.getLogger("autoids")

# RNG stream tags per stage
_CV, _IMPORTANCE, _TUNE, _OCSE, _SUBSAMPLE, _ALPHA = 11, 12, 13, 14, 15, 16
ALPHA_RANGE = (0.5, 1.0)


@dataclass(frozen=True)
class PipelineConfig:
    """Run configuration; every field has a default except the data path."""

    data: str | None = None
    label_column: str = "Label"
    seed: int = 0
    test_fraction: float = 0.2
    k: int = 5
    alpha: float = 0.9
    tune_alpha: bool = False
    tvae: TvaeConfig = field(default_factory=TvaeConfig)
    balance_target: str = "half"
    hpo_budget: int = 30
    meta_budget: int = 30
    meta_feature_mode: str = "out_of_fold"
    tpe_gamma: float = 0.25
    tpe_startup: int = 10
    tpe_candidates: int = 24
    # desk-scale knobs: folds and row cap for tuning objectives, narrowed domains
    hpo_folds: int | None = None
    hpo_max_rows: int | None = None
    space_overrides: dict = field(default_factory=dict)
    inference_batch: int = 10_000
    model_out: str | None = None
    report_out: str | None = None

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.hpo_budget < 1 or self.meta_budget < 1:
            raise ConfigError("hpo budgets must be >= 1")
        if self.meta_feature_mode not in MODES:
            raise ConfigError(f"meta_feature_mode must be one of {MODES}")
        if self.balance_target not in ("half", "average"):
            raise ConfigError("balance_target must be 'half' or 'average'")
        if self.hpo_folds is not None and self.hpo_folds < 2:
            raise ConfigError("hpo_folds must be >= 2")
        if self.hpo_max_rows is not None and self.hpo_max_rows < 10:
            raise ConfigError("hpo_max_rows must be >= 10")
        if self.inference_batch < 1:
            raise ConfigError("inference_batch must be >= 1")
        self.tpe_config(0)

    @property
    def tuning_folds(self) -> int:
        return self.hpo_folds or self.k

    def tpe_config(self, seed: int) -> TpeConfig:
        return TpeConfig(self.tpe_gamma, self.tpe_startup, self.tpe_candidates, seed)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "tvae" in d:
            tv = d["tvae"]
            if not isinstance(tv, dict):
                raise ConfigError("tvae must be an object")
            try:
                d["tvae"] = TvaeConfig(**tv)
            except TypeError as exc:
                raise ConfigError(f"bad tvae config: {exc}") from exc
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    @classmethod
    def from_json(cls, path, **overrides) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tvae"]["hidden_sizes"] = list(d["tvae"]["hidden_sizes"])
        return d

    def snapshot(self) -> dict:
        """Config without output paths, as stored in reports and model files."""
        d = self.to_dict()
        d.pop("model_out")
        d.pop("report_out")
        return d


class _Stages:
    """Stage timer that tags errors with the stage they came from."""

    def __init__(self):
        self.seconds: dict[str, float] = {}

    def run(self, name: str, fn, *args, **kw):
        t0 = time.perf_counter()
        log.info("stage %s started", name)
        try:
            return fn(*args, **kw)
        except StageError:
            raise
        except AutoIdsError as exc:
            raise StageError(name, exc) from exc
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise StageError(name, TrainingError(str(exc))) from exc
        finally:
            self.seconds[name] = time.perf_counter() - t0


def holdout_audit(n_rows: int, train_idx, test_idx, used_sources: dict[str, np.ndarray]) -> dict:
    """Check that every training-time stage only touched training-split rows.

    ``used_sources`` maps a stage name to the original row ids it consumed
    (synthetic rows carry -1 and are skipped).
    """
    train_idx = np.asarray(train_idx)
    test_idx = np.asarray(test_idx)
    disjoint = np.intersect1d(train_idx, test_idx).size == 0
    exhaustive = np.union1d(train_idx, test_idx).size == n_rows
    is_test = np.zeros(n_rows, dtype=bool)
    is_test[test_idx] = True
    stages = {}
    for name, src in used_sources.items():
        src = np.asarray(src)
        real = src[src >= 0]
        stages[name] = {"rows": int(src.size), "original_rows": int(real.size),
                        "test_rows": int(is_test[real].sum())}
    passed = disjoint and exhaustive and all(s["test_rows"] == 0 for s in stages.values())
    return {"passed": bool(passed), "split_disjoint": bool(disjoint), "split_exhaustive": bool(exhaustive),
            "stages": stages}


def imputation_stats(X: np.ndarray) -> dict:
    return {"median": np.median(X, axis=0).tolist(), "max": X.max(axis=0).tolist(),
            "min": X.min(axis=0).tolist()}


def measure_inference(e: StackedEnsemble, X) -> float:
    """Mean wall milliseconds per sample of ``predict_ensemble`` over ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 1:
        raise DataError("measure_inference needs at least one row")
    t0 = time.perf_counter()
    predict_ensemble(e, X)
    return (time.perf_counter() - t0) * 1e3 / X.shape[0]


def _inference_probe(X: np.ndarray, batch: int) -> np.ndarray:
    reps = -(-batch // X.shape[0])
    return np.tile(X, (reps, 1))[:batch]


def _tuned_block(spec, result) -> dict:
    return {
        "family": spec.family,
        "params": dict(spec.params),
        "trials": [trial_record(t) for t in result.history],
        "best_so_far": best_so_far(result.history),
        "best_value": result.best.value,
    }


def _tune_alpha(avg, family: str, X, y, K: int, cfg: PipelineConfig, workers) -> tuple[float, list]:
    """BO-TPE over the cumulative-importance threshold, scored by the top family's CV F1."""
    seed = cfg.seed
    folds = stratified_kfold_labels(y, cfg.tuning_folds, unit_seed(seed, _ALPHA, 0))
    spec = default_spec(family, cfg.space_overrides)
    cache: dict[tuple, float] = {}

    def objective(config):
        cols = tuple(select_features(avg, config["alpha"]).selected)
        if cols not in cache:
            Xs = np.ascontiguousarray(X[:, list(cols)])
            cache[cols] = 1.0 - cross_validate(spec, Xs, y, K, folds, unit_seed(seed, _ALPHA, 1), workers).mean_f1
        return cache[cols]

    result = optimize(objective, {"alpha": Continuous(*ALPHA_RANGE)}, cfg.hpo_budget,
                      cfg.tpe_config(unit_seed(seed, _ALPHA, 2)))
    return float(result.best.config["alpha"]), [trial_record(t) for t in result.history]


def run_train(cfg: PipelineConfig, dataset: EncodedDataset | None = None) -> tuple[StackedEnsemble, dict]:
    """Train the stacked ensemble and evaluate it on the holdout split.

    Either ``cfg.data`` names a CSV or ``dataset`` is passed in directly.
    """
    t_start = time.perf_counter()
    st = _Stages()
    seed = cfg.seed
    workers = n_workers()

    def load():
        if dataset is not None:
            return dataset
        if not cfg.data:
            raise ConfigError("no data path configured")
        return sanitize_encode(load_csv(cfg.data, cfg.label_column))

    def load_checked():
        loaded = load()
        if loaded.n_classes < 2:
            raise DataError(f"need at least 2 classes, found {loaded.class_names}")
        return loaded

    ds = st.run("load", load_checked)
    K = ds.n_classes
    def make_split():
        sp = stratified_split(ds, cfg.test_fraction, seed)
        # every class needs k genuine training rows, otherwise some CV folds
        # would hold only synthetic rows of that class after balancing
        stratified_kfold_labels(ds.labels[sp.train_idx], cfg.k, seed)
        return sp

    split = st.run("split", make_split)

    # Stage 1: balancing on training rows only
    bal = st.run("balance", balance, ds, split.train_idx, cfg.tvae, cfg.balance_target)
    Xb, yb = bal.features, bal.labels
    tune_rows = st.run("subsample", stratified_subsample, yb, cfg.hpo_max_rows, unit_seed(seed, _SUBSAMPLE))
    Xt, yt = Xb[tune_rows], yb[tune_rows]

    # Stage 2: rank the six families, average top-3 importances, select features
    def rank():
        folds = stratified_kfold_labels(yt, cfg.k, unit_seed(seed, _CV, 0))
        scores = [cross_validate(default_spec(f, cfg.space_overrides), Xt, yt, K, folds,
                                 unit_seed(seed, _CV, i + 1), workers)
                  for i, f in enumerate(FAMILIES)]
        top = rank_learners(scores, use_fit_time=False)
        imps = [trees.feature_importances(trees.fit(default_spec(f, cfg.space_overrides), Xt, yt, n_classes=K,
                                                    seed=unit_seed(seed, _IMPORTANCE, FAMILIES.index(f))))
                for f in top]
        avg = average_importances(*imps)
        alpha, alpha_trials = cfg.alpha, None
        if cfg.tune_alpha:
            alpha, alpha_trials = _tune_alpha(avg, top[0], Xt, yt, K, cfg, workers)
        return scores, top, avg, select_features(avg, alpha), alpha_trials

    scores, top, avg, sel, alpha_trials = st.run("feature_selection", rank)
    cols = np.asarray(sel.selected, dtype=np.intp)
    Xt_sel = np.ascontiguousarray(Xt[:, cols])

    # Stage 3: tune each of the three base learners
    def tune():
        folds = stratified_kfold_labels(yt, cfg.tuning_folds, unit_seed(seed, _TUNE, 0))
        out = []
        for rank_pos, fam in enumerate(top):
            s = unit_seed(seed, _TUNE, rank_pos + 1)
            out.append(tune_learner(fam, Xt_sel, yt, K, folds, cfg.hpo_budget, cfg.tpe_config(s), s,
                                    workers, cfg.space_overrides))
        return out

    tuned = st.run("hpo", tune)
    base_specs = [spec for spec, _ in tuned]

    # Stage 4: stacked ensemble on the full balanced, feature-selected view
    def stack():
        s = unit_seed(seed, _OCSE)
        return train_ocse(
            np.ascontiguousarray(Xb[:, cols]), yb, K, base_specs, top[0], sel, ds.class_names, ds.feature_names,
            meta_budget=cfg.meta_budget, tpe_cfg=cfg.tpe_config(s), k=cfg.k, seed=s, mode=cfg.meta_feature_mode,
            workers=workers, space_overrides=cfg.space_overrides,
            tune_rows=cfg.hpo_max_rows,
        )

    ens, trace = st.run("ensemble", stack)
    ens.config.update({"pipeline": cfg.snapshot(),
                       "imputation": imputation_stats(ds.features[split.train_idx])})
    training_seconds = time.perf_counter() - t_start

    # holdout evaluation
    def evaluate_holdout():
        X_test = ds.features[split.test_idx]
        y_test = ds.labels[split.test_idx]
        labels, _ = predict_ensemble(ens, X_test)
        metrics = compute_metrics(y_test, labels, K)
        base = [compute_metrics(y_test, trees.predict(m, X_test[:, cols]), K) for m in ens.base_models]
        probe = _inference_probe(X_test, cfg.inference_batch)
        return metrics, base, measure_inference(ens, probe), probe.shape[0]

    metrics, base_metrics, ms_per_sample, batch = st.run("evaluate", evaluate_holdout)

    audit = holdout_audit(ds.n_samples, split.train_idx, split.test_idx, {
        "balancing": split.train_idx,
        "feature_selection": bal.source[tune_rows],
        "hpo": bal.source[tune_rows],
        "ensemble": bal.source,
    })
    if not audit["passed"]:
        raise StageError("audit", TrainingError("holdout rows leaked into training stages"))

    leakage = {"meta_feature_mode": cfg.meta_feature_mode,
               "out_of_fold_audit": trace.audit_out_of_fold() if trace.oof_fold is not None else None}
    if cfg.meta_feature_mode == "out_of_fold" and not leakage["out_of_fold_audit"]:
        raise StageError("audit", TrainingError("out-of-fold bookkeeping audit failed"))

    base_blocks = []
    for (spec, result), m in zip(tuned, base_metrics):
        block = _tuned_block(spec, result)
        block["holdout"] = m
        base_blocks.append(block)
    meta_block = {
        "family": ens.meta_family,
        "params": dict(ens.meta_model.params),
        "trials": [trial_record(t) for t in trace.meta_history],
        "best_so_far": best_so_far(trace.meta_history),
        "best_value": min(t.value for t in trace.meta_history if t.status == "ok"),
    }
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "mode": {"meta_feature_mode": cfg.meta_feature_mode, "balance_target": cfg.balance_target},
        "config": cfg.snapshot(),
        "data": {
            "n_rows": ds.n_samples, "n_features": ds.n_features, "class_names": ds.class_names,
            "feature_names": ds.feature_names, "n_train": int(split.train_idx.size),
            "n_test": int(split.test_idx.size), "n_balanced": int(yb.size), "n_tuning_rows": int(tune_rows.size),
        },
        "holdout_audit": audit,
        "leakage_audit": leakage,
        "balancing": bal.summary,
        "cv_table": [{"family": s.family, "mean_f1": s.mean_f1, "fold_f1": s.fold_f1,
                      "fit_seconds": s.mean_fit_seconds} for s in scores],
        "top_families": top,
        "feature_selection": {
            "alpha": sel.alpha, "selected": sel.selected,
            "selected_names": [ds.feature_names[i] for i in sel.selected],
            "cumulative": sel.cumulative, "fallback": sel.fallback,
            "curve": cumulative_curve(avg, sel, ds.feature_names),
            "alpha_trials": alpha_trials,
        },
        "base_models": base_blocks,
        "meta_learner": meta_block,
        "evaluation": metrics,
        "ensemble_vs_best_base": {
            "ensemble_f1": metrics["weighted_f1"],
            "best_base_f1": max(m["weighted_f1"] for m in base_metrics),
        },
        "timings": {"training_seconds": training_seconds, "stage_seconds": st.seconds,
                    "inference_ms_per_sample": ms_per_sample, "inference_batch": batch},
        "environment": {"backend": BACKEND, "workers": workers},
    }
    return ens, report


def train_and_save(cfg: PipelineConfig, model_out=None, report_out=None) -> tuple[StackedEnsemble, dict]:
    """``run_train`` plus artifact writing; partial outputs are removed on failure."""
    model_out = model_out or cfg.model_out
    report_out = report_out or cfg.report_out
    for p in (model_out, report_out):
        if p is not None:
            Path(p).unlink(missing_ok=True)
    written: list[Path] = []
    try:
        ens, report = run_train(cfg)
        report = jsonable(report)
        validate_report(report)
        if model_out:
            report["model_digest"] = save_model(ens, model_out)
            written.append(Path(model_out))
        if report_out:
            write_report(report, report_out)
            written.append(Path(report_out))
        return ens, report
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------------------
# scoring new data with a trained model
# ---------------------------------------------------------------------------

def load_feature_table(path, e: StackedEnsemble, label_column: str = "Label",
                       require_labels: bool = False) -> tuple[np.ndarray, list[str] | None]:
    """Read the model's feature columns by name; impute with training statistics."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        pos = {h: i for i, h in enumerate(header)}
        missing = [f for f in e.feature_names if f not in pos]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing[:5]}")
        if require_labels and label_column not in pos:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        idx = [pos[f] for f in e.feature_names]
        li = pos.get(label_column)
        rows, labels = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {reader.line_num} has {len(row)} cells, header has {len(header)}")
            rows.append([row[i] for i in idx])
            if li is not None:
                labels.append(row[li].strip())
    X = np.empty((len(rows), len(idx)))
    for r, row in enumerate(rows):
        for c, cell in enumerate(row):
            text = cell.strip()
            try:
                X[r, c] = float(text) if text else np.nan
            except ValueError:
                raise DataError(f"{path}: unparseable value {cell!r} at data row {r + 1}, "
                                f"column {e.feature_names[c]!r}") from None
    stats = e.config.get("imputation")
    if stats and X.size:
        med, hi, lo = (np.asarray(stats[k]) for k in ("median", "max", "min"))
        nan_r, nan_c = np.nonzero(np.isnan(X))
        X[nan_r, nan_c] = med[nan_c]
        X = np.where(X == np.inf, hi, X)
        X = np.where(X == -np.inf, lo, X)
    elif not np.isfinite(X).all():
        raise DataError(f"{path}: non-finite values and no imputation statistics in the model")
    return X, (labels if li is not None else None)


def evaluate(e: StackedEnsemble, path, label_column: str = "Label") -> dict:
    """Metrics of ``e`` on a labeled CSV, plus inference timing."""
    X, labels = load_feature_table(path, e, label_column, require_labels=True)
    if X.shape[0] < 1:
        raise DataError(f"{path}: no data rows")
    ids = {name: i for i, name in enumerate(e.class_names)}
    unknown = sorted(set(labels) - set(ids))
    if unknown:
        raise DataError(f"{path}: labels not seen in training: {unknown[:5]}")
    y = np.array([ids[s] for s in labels], dtype=np.intp)
    t0 = time.perf_counter()
    pred, _ = predict_ensemble(e, X)
    elapsed = time.perf_counter() - t0
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "class_names": e.class_names,
        "evaluation": compute_metrics(y, pred, len(e.class_names)),
        "timings": {"inference_ms_per_sample": elapsed * 1e3 / X.shape[0], "inference_batch": int(X.shape[0])},
    }


def predict_file(e: StackedEnsemble, input_path, output_path, label_column: str = "Label") -> int:
    """Write predicted label names and per-class confidences; returns the row count."""
    X, _ = load_feature_table(input_path, e, label_column)
    labels, conf = predict_ensemble(e, X)
    try:
        with open(output_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["predicted_label"] + [f"confidence_{c}" for c in e.class_names])
            for lab, row in zip(labels, conf):
                w.writerow([e.class_names[lab]] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise PersistenceError(f"cannot write predictions {output_path}: {exc}") from exc
    return int(X.shape[0])


def describe(e: StackedEnsemble) -> dict[str, Any]:
    """Summary used by the ``inspect`` command."""
    return {
        "class_names": e.class_names,
        "meta_feature_mode": e.meta_feature_mode,
        "base_models": [{"family": m.family, "params": m.params} for m in e.base_models],
        "meta_learner": {"family": e.meta_family, "params": e.meta_model.params},
        "selected_features": [e.feature_names[i] for i in e.selected_features.selected],
        "alpha": e.selected_features.alpha,
        "n_input_features": e.n_input_features,
    }
