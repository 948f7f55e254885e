"""Evaluation metrics and method ranking."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

MSE = "mse"
SEGMENTATION_ACCURACY = "segmentation-accuracy"
METRICS = (MSE, SEGMENTATION_ACCURACY)


def mse(pred, truth):
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.mean((p - t) ** 2))


def confusion(pred, truth):
    p = np.asarray(pred, dtype=int).reshape(-1)
    t = np.asarray(truth, dtype=int).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch {p.shape[0]} vs {t.shape[0]}")
    if p.size == 0:
        raise ValueError("empty input")
    if p.min() < 0 or t.min() < 0:
        raise ValueError("labels must be non-negative")
    K = int(max(p.max(), t.max())) + 1
    M = np.zeros((K, K), dtype=np.int64)
    np.add.at(M, (p, t), 1)
    return M


def segmentation_accuracy(pred, truth):
    """Frame accuracy under the best one-to-one relabeling of ``pred``.

    The best permutation is an assignment problem on the confusion matrix,
    solved exactly, so any number of labels is handled.
    """
    M = confusion(pred, truth)
    r, c = linear_sum_assignment(-M)
    return float(M[r, c].sum() / M.sum())


def lower_is_better(metric):
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    return metric == MSE


def rank(results, metric=MSE):
    """Method names ordered best first; ties keep name order."""
    sign = 1.0 if lower_is_better(metric) else -1.0
    return sorted(results, key=lambda k: (sign * float(results[k]), k))
