"""Evaluation-report JSON: schema, validation and canonical serialization."""
from __future__ import annotations

import json
import math

import jsonschema

from .errors import PersistenceError

REPORT_SCHEMA_VERSION = 1

# Keys whose values depend on the clock or the host rather than on the data.
WALL_CLOCK_KEYS = frozenset({"timings", "environment"})
WALL_CLOCK_SUFFIXES = ("_seconds", "_ms")

_num = {"type": "number"}
_prob = {"type": "number", "minimum": 0.0, "maximum": 1.0}
_metrics = {
    "type": "object",
    "required": ["accuracy", "weighted_precision", "weighted_recall", "weighted_f1", "macro_f1",
                 "per_class", "confusion_matrix", "n_samples"],
    "properties": {
        "accuracy": _prob,
        "weighted_precision": _prob,
        "weighted_recall": _prob,
        "weighted_f1": _prob,
        "macro_f1": _prob,
        "per_class": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["precision", "recall", "f1", "support"],
                "properties": {"precision": _prob, "recall": _prob, "f1": _prob,
                               "support": {"type": "integer", "minimum": 0}},
            },
        },
        "confusion_matrix": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "n_samples": {"type": "integer", "minimum": 1},
    },
}
_trial = {
    "type": "object",
    "required": ["config", "value", "status"],
    "properties": {"config": {"type": "object"}, "value": {"type": ["number", "null"]},
                   "status": {"enum": ["ok", "failed"]}},
}
_tuned = {
    "type": "object",
    "required": ["family", "params", "trials", "best_value"],
    "properties": {
        "family": {"enum": ["DT", "RF", "ET", "RGBT", "LGBT", "OGBT"]},
        "params": {"type": "object"},
        "trials": {"type": "array", "items": _trial, "minItems": 1},
        "best_value": _num,
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "mode", "config", "data", "holdout_audit", "balancing", "cv_table",
                 "top_families", "feature_selection", "base_models", "meta_learner", "evaluation",
                 "timings"],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "mode": {
            "type": "object",
            "required": ["meta_feature_mode", "balance_target"],
            "properties": {"meta_feature_mode": {"enum": ["out_of_fold", "paper_literal"]},
                           "balance_target": {"enum": ["half", "average"]}},
        },
        "config": {"type": "object"},
        "data": {
            "type": "object",
            "required": ["n_rows", "n_features", "class_names", "n_train", "n_test"],
        },
        "holdout_audit": {
            "type": "object",
            "required": ["passed"],
            "properties": {"passed": {"type": "boolean"}},
        },
        "balancing": {"type": "object", "required": ["counts_before", "counts_after"]},
        "cv_table": {
            "type": "array",
            "minItems": 6,
            "maxItems": 6,
            "items": {"type": "object", "required": ["family", "mean_f1", "fold_f1"],
                      "properties": {"mean_f1": _prob}},
        },
        "top_families": {"type": "array", "minItems": 3, "maxItems": 3},
        "feature_selection": {
            "type": "object",
            "required": ["alpha", "selected", "selected_names", "cumulative", "fallback", "curve"],
        },
        "base_models": {
            "type": "array", "minItems": 3, "maxItems": 3,
            "items": {"allOf": [_tuned, {"required": ["holdout"], "properties": {"holdout": _metrics}}]},
        },
        "meta_learner": _tuned,
        "leakage_audit": {"type": "object"},
        "evaluation": _metrics,
        "timings": {
            "type": "object",
            "required": ["training_seconds", "inference_ms_per_sample", "inference_batch"],
            "properties": {"training_seconds": _num, "inference_ms_per_sample": _num,
                           "inference_batch": {"type": "integer"}},
        },
        "environment": {"type": "object"},
    },
}


def validate_report(report: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``report`` does not match the schema."""
    jsonschema.validate(report, REPORT_SCHEMA)


def strip_wall_clock(obj):
    """Copy of ``obj`` without clock- or host-dependent fields."""
    if isinstance(obj, dict):
        return {k: strip_wall_clock(v) for k, v in obj.items()
                if k not in WALL_CLOCK_KEYS and not k.endswith(WALL_CLOCK_SUFFIXES)}
    if isinstance(obj, list):
        return [strip_wall_clock(v) for v in obj]
    return obj


def jsonable(obj):
    """Numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(report: dict, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps_report(report))
    except OSError as exc:
        raise PersistenceError(f"cannot write report {path}: {exc}") from exc
