"""
Differentiable operators beyond Tensor arithmetic: activations, dropout,
concatenation, segment reductions and losses.
"""
from typing import Optional, Sequence, Tuple

import numpy as np

from autodiff.tensor import ArrayLike, Tensor
from shared.errors import ShapeMismatch


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)
    return Tensor._make(s, (x,), lambda g: (g * s * (1.0 - s),))


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x)"""
    s = _stable_sigmoid(x.data)
    a = x.data
    return Tensor._make(a * s, (x,), lambda g: (g * (s + a * s * (1.0 - s)),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    a = x.data
    return Tensor._make(np.log(a), (x,), lambda g: (g / a,))


def leaky_relu(x: Tensor, negative_slope: float = 0.2) -> Tensor:
    slope = np.where(x.data > 0, 1.0, negative_slope).astype(x.dtype)
    return Tensor._make(x.data * slope, (x,), lambda g: (g * slope,))


def dropout(x: Tensor, p: float, training: bool, key: Tuple[int, int], counter: Tuple[int, int]) -> Tensor:
    """
    Inverted dropout with a counter-based mask.

    The mask is drawn from Philox keyed by ``key`` = (seed, layer id) at
    ``counter`` = (step, call index), so a run is bit-reproducible and no
    generator state is shared between layers or threads.
    """
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    bit_gen = np.random.Philox(
        key=np.array(key, dtype=np.uint64),
        counter=np.array([counter[0], counter[1], 0, 0], dtype=np.uint64),
    )
    keep = np.random.Generator(bit_gen).random(x.shape) >= p
    mask = keep.astype(x.dtype) / (1.0 - p)
    return x * mask


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch("concat", [t.shape for t in tensors]) from None
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor._make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def gather_rows(x: Tensor, index: ArrayLike) -> Tensor:
    return x[np.asarray(index, dtype=np.int64)]


# --- segment reductions --------------------------------------------------

def _check_segments(op: str, x: Tensor, segment_ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.shape[0] != x.shape[0]:
        raise ShapeMismatch(op, (x.shape, ids.shape))
    return ids


def segment_sum(x: Tensor, segment_ids: ArrayLike, num_segments: int) -> Tensor:
    ids = _check_segments("segment_sum", x, segment_ids)
    out = np.zeros((num_segments,) + x.shape[1:], dtype=x.dtype)
    np.add.at(out, ids, x.data)
    return Tensor._make(out, (x,), lambda g: (g[ids],))


def segment_counts(segment_ids: ArrayLike, num_segments: int) -> np.ndarray:
    return np.bincount(np.asarray(segment_ids, dtype=np.int64), minlength=num_segments)


def segment_mean(x: Tensor, segment_ids: ArrayLike, num_segments: int) -> Tensor:
    ids = _check_segments("segment_mean", x, segment_ids)
    counts = np.maximum(segment_counts(ids, num_segments), 1).astype(x.dtype)
    shape = (num_segments,) + (1,) * (x.ndim - 1)
    return segment_sum(x, ids, num_segments) * counts.reshape(shape) ** -1


def segment_max(x: Tensor, segment_ids: ArrayLike, num_segments: int) -> Tensor:
    """Per-segment maximum; tied maxima share the incoming gradient equally. Empty segments give 0."""
    ids = _check_segments("segment_max", x, segment_ids)
    out = np.full((num_segments,) + x.shape[1:], -np.inf, dtype=x.dtype)
    np.maximum.at(out, ids, x.data)
    out[np.isneginf(out)] = 0.0
    winners = (x.data == out[ids]).astype(x.dtype)
    ties = np.zeros_like(out)
    np.add.at(ties, ids, winners)
    share = winners / np.maximum(ties, 1.0)[ids]
    return Tensor._make(out, (x,), lambda g: (g[ids] * share,))


def segment_softmax(scores: Tensor, segment_ids: ArrayLike, num_segments: int) -> Tensor:
    """Softmax over rows sharing a segment id, independently for each trailing column"""
    ids = _check_segments("segment_softmax", scores, segment_ids)
    a = scores.data
    peak = np.full((num_segments,) + a.shape[1:], -np.inf, dtype=a.dtype)
    np.maximum.at(peak, ids, a)
    e = np.exp(a - peak[ids])
    denom = np.zeros_like(peak)
    np.add.at(denom, ids, e)
    y = e / denom[ids]

    def backward(g):
        weighted = np.zeros_like(peak)
        np.add.at(weighted, ids, g * y)
        return (y * (g - weighted[ids]),)

    return Tensor._make(y, (scores,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    a = x.data
    e = np.exp(a - a.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)
    return Tensor._make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


# --- losses ----------------------------------------------------------

def mse_loss(pred: Tensor, target: ArrayLike, mask: Optional[ArrayLike] = None) -> Tensor:
    """
    Mean squared error over the entries where ``mask`` is 1.

    NaN targets are always masked out.
    """
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise ShapeMismatch("mse_loss", (pred.shape, t.shape))
    m = np.isfinite(t).astype(pred.dtype)
    if mask is not None:
        m = m * np.asarray(mask, dtype=pred.dtype)
    t = np.where(m > 0, t, 0.0)
    denom = max(float(m.sum()), 1.0)
    diff = (pred - t) * m
    return (diff * diff).sum() * (1.0 / denom)
