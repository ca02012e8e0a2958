"""Classification metrics and error-rate arithmetic."""
from __future__ import annotations

import numpy as np

from .errors import DataError


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.shape != y_pred.shape:
        raise DataError("y_true and y_pred differ in length")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise DataError(f"label outside 0..{n_classes - 1}")
    return np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def _safe_div(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.divide(a, b, out=np.zeros_like(a), where=b > 0)


def compute_metrics(y_true, y_pred, n_classes: int) -> dict:
    """Per-class and aggregate precision/recall/F1 plus accuracy.

    Undefined ratios are 0; aggregates are support-weighted (macro means
    are included alongside).
    """
    y_true = np.asarray(y_true)
    if y_true.size < 1:
        raise DataError("compute_metrics needs at least one sample")
    cm = confusion_matrix(y_true, y_pred, n_classes)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    total = int(support.sum())
    w = support / total
    return {
        "accuracy": float(np.trace(cm) / total),
        "weighted_precision": float(np.dot(w, precision)),
        "weighted_recall": float(np.dot(w, recall)),
        "weighted_f1": float(np.dot(w, f1)),
        "macro_precision": float(precision.mean()),
        "macro_recall": float(recall.mean()),
        "macro_f1": float(f1.mean()),
        "per_class": [
            {"precision": float(p), "recall": float(r), "f1": float(f), "support": int(s)}
            for p, r, f, s in zip(precision, recall, f1, support)
        ],
        "confusion_matrix": cm.tolist(),
        "n_samples": total,
    }


def weighted_f1(y_true, y_pred, n_classes: int) -> float:
    return compute_metrics(y_true, y_pred, n_classes)["weighted_f1"]


def error_rate_reduction(acc_new: float, acc_base: float) -> float:
    """Share of the baseline's errors removed: ``(new - base) / (1 - base)``."""
    if acc_base >= 1.0:
        raise DataError("baseline accuracy of 1 leaves no error to reduce")
    return (acc_new - acc_base) / (1.0 - acc_base)
