"""
Error metrics and fold aggregation.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from shared.errors import ShapeMismatch
from shared.models import FoldResult, FoldStatus, MethodSummary


@dataclass(frozen=True)
class MseResult:
    per_target: List[Optional[float]]   # None for a column with no measured values
    pooled: float


def mse(pred: np.ndarray, truth: np.ndarray) -> MseResult:
    """
    Per-target and pooled mean squared error.

    Entries whose true value is NaN (an unmeasured target) are skipped.

    Raises:
        ShapeMismatch: pred and truth shapes differ
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeMismatch("mse", (pred.shape, truth.shape))
    if pred.ndim == 1:
        pred, truth = pred[:, None], truth[:, None]
    measured = np.isfinite(truth)
    sq = np.where(measured, (pred - np.where(measured, truth, 0.0)) ** 2, 0.0)
    per_target = []
    for t in range(truth.shape[1]):
        n = int(measured[:, t].sum())
        per_target.append(float(sq[:, t].sum() / n) if n else None)
    total = int(measured.sum())
    pooled = float(sq.sum() / total) if total else float("nan")
    return MseResult(per_target, pooled)


def clamp_unit(pred: np.ndarray) -> np.ndarray:
    """Yields are physical fractions"""
    return np.clip(pred, 0.0, 1.0)


def fold_std(values: Sequence[float]) -> Optional[float]:
    """Unbiased sample standard deviation; None with fewer than two folds"""
    if len(values) < 2:
        return None
    return float(np.std(np.asarray(values, dtype=np.float64), ddof=1))


def summarize(method: str, label: str, results: Sequence[FoldResult]) -> MethodSummary:
    """Mean and spread of pooled fold MSEs over the completed folds"""
    done = [r for r in results if r.status == FoldStatus.COMPLETED and r.mse_pooled is not None]
    pooled = [r.mse_pooled for r in done]
    per_target_mean: List[Optional[float]] = []
    if done:
        width = max(len(r.mse_per_target) for r in done)
        for t in range(width):
            values = [r.mse_per_target[t] for r in done
                      if t < len(r.mse_per_target) and r.mse_per_target[t] is not None]
            per_target_mean.append(float(np.mean(values)) if values else None)
    digests = {r.config_digest for r in done if r.config_digest}
    return MethodSummary(
        method=method,
        label=label,
        n_folds=len(results),
        n_failed=sum(1 for r in results if r.status == FoldStatus.FAILED),
        mse_mean=float(np.mean(pooled)) if pooled else None,
        mse_std=fold_std(pooled),
        mse_per_target_mean=per_target_mean,
        config_digest=digests.pop() if len(digests) == 1 else None,
    )
