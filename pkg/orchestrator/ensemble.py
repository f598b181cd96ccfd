"""
Inverse-variance ensembling of a tree model and a neural model.
"""
from typing import Optional

import numpy as np

from shared.config import settings

PER_ROW = "per_row"
PER_FOLD = "per_fold"


def prediction_variance(pred: np.ndarray, mode: str = PER_ROW, n_targets: Optional[int] = None) -> np.ndarray:
    """
    Spread of a model's predictions across output dimensions.

    ``per_row`` gives each row the variance of its own outputs; ``per_fold``
    gives every row the mean of those variances over the fold.

    Returns:
        (n, 1) array of variances
    """
    pred = np.asarray(pred, dtype=np.float64)
    if n_targets is not None:
        pred = pred[:, :n_targets]
    row_var = pred.var(axis=1, keepdims=True) if pred.shape[0] else np.zeros((0, 1))
    if mode == PER_ROW:
        return row_var
    if mode == PER_FOLD:
        return np.full_like(row_var, row_var.mean() if row_var.size else 0.0)
    raise ValueError(f"unknown variance mode {mode!r}")


def ensemble_combine(
    pred_gbdt: np.ndarray,
    pred_nn: np.ndarray,
    var_gbdt,
    var_nn,
    epsilon: Optional[float] = None,
) -> np.ndarray:
    """
    (w_g * y_g + w_n * y_n) / (w_g + w_n) with w = 1 / (variance + epsilon).

    Variances broadcast against the predictions, so per-row (n, 1) or scalar
    values both work.
    """
    eps = settings.ENSEMBLE_EPSILON if epsilon is None else epsilon
    y_g = np.asarray(pred_gbdt, dtype=np.float64)
    y_n = np.asarray(pred_nn, dtype=np.float64)
    var_g = np.asarray(var_gbdt, dtype=np.float64)
    var_n = np.asarray(var_nn, dtype=np.float64)
    if np.any(var_g < 0) or np.any(var_n < 0):
        raise ValueError("variances must be non-negative")
    w_g = 1.0 / (var_g + eps)
    w_n = 1.0 / (var_n + eps)
    return (w_g * y_g + w_n * y_n) / (w_g + w_n)
