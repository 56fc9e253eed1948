"""Definitional evaluation metrics.

Sums are accumulated sequentially in Python floats so that results are
bit-reproducible against straightforward definitional re-implementations;
the vectors involved are short, so this costs nothing.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import LabelError, ShapeError


def regression_metrics(y_true, y_pred) -> dict:
    """MAE, RMSE and R^2. A constant target makes R^2 undefined (NaN);
    MAE/RMSE stay valid."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ShapeError("y_true and y_pred must be equal-length and nonempty")
    n = y_true.size
    abs_sum = 0.0
    sq_sum = 0.0
    for t, p in zip(y_true.tolist(), y_pred.tolist()):
        abs_sum += abs(t - p)
        sq_sum += (t - p) ** 2
    mean = sum(y_true.tolist()) / n
    tot_sum = 0.0
    for t in y_true.tolist():
        tot_sum += (t - mean) ** 2
    r2 = math.nan if tot_sum == 0.0 else 1.0 - sq_sum / tot_sum
    return {"mae": abs_sum / n, "rmse": math.sqrt(sq_sum / n), "r2": r2}


def classification_metrics(y_true, y_pred, n_classes: int) -> dict:
    """Accuracy plus macro-averaged precision/recall/F1.

    Per-class divisions by zero contribute 0 to the macro average. For
    binary tasks the positive-class (label 1) precision is reported as
    well, since aggregate precision conventions differ.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ShapeError("y_true and y_pred must be equal-length and nonempty")
    if y_true.min() < 0 or y_true.max() >= n_classes:
        raise LabelError("true label outside [0, n_classes)")
    if y_pred.min() < 0 or y_pred.max() >= n_classes:
        raise LabelError("predicted label outside [0, n_classes)")

    n = y_true.size
    correct = 0
    for t, p in zip(y_true.tolist(), y_pred.tolist()):
        if t == p:
            correct += 1
    accuracy = correct / n

    precisions, recalls, f1s = [], [], []
    for c in range(n_classes):
        tp = int(np.sum((y_true == c) & (y_pred == c)))
        fp = int(np.sum((y_true != c) & (y_pred == c)))
        fn = int(np.sum((y_true == c) & (y_pred != c)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)

    result = {
        "accuracy": accuracy,
        "precision_macro": sum(precisions) / n_classes,
        "recall_macro": sum(recalls) / n_classes,
        "f1_macro": sum(f1s) / n_classes,
    }
    if n_classes == 2:
        result["precision_positive"] = precisions[1]
    return result
