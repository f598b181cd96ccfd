"""
Central finite-difference gradient checking.
"""
from typing import Callable, Dict, Sequence

import numpy as np

from autodiff.tensor import Tensor, no_grad


def numeric_gradient(fn: Callable[[], Tensor], target: Tensor, eps: float = 1e-5) -> np.ndarray:
    """d fn() / d target by central differences; ``fn`` must read ``target.data`` on every call"""
    target.data = np.ascontiguousarray(target.data)
    grad = np.zeros_like(target.data, dtype=np.float64)
    flat = target.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        with no_grad():
            plus = float(fn().data.sum())
            flat[i] = original - eps
            minus = float(fn().data.sum())
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a|| + ||n||, 1e-12)"""
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale = np.linalg.norm(np.ravel(analytic)) + np.linalg.norm(np.ravel(numeric))
    return float(diff / max(scale, 1e-12))


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> Dict[int, float]:
    """
    Compare backward() gradients of a scalar-valued ``fn`` with finite differences.

    Returns:
        Relative error per input position
    """
    for t in inputs:
        t.grad = None
    fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    return {
        i: relative_error(analytic[i], numeric_gradient(fn, t, eps))
        for i, t in enumerate(inputs)
    }
