"""
Reverse-mode automatic differentiation over NumPy arrays.

A Tensor records the operation that produced it (its parents plus a closure
mapping the output gradient to parent gradients). ``backward`` walks the
recorded graph in reverse topological order and accumulates into the
``grad`` buffers of leaf tensors that require gradients.
"""
import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from shared.errors import NonScalarLoss, ShapeMismatch

_ids = itertools.count()
_grad_state = threading.local()

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


def grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording on the current thread"""
    previous = grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after NumPy broadcasting"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_array(value, dtype=None) -> np.ndarray:
    array = np.asarray(value)
    if dtype is not None:
        return array.astype(dtype, copy=False)
    if not np.issubdtype(array.dtype, np.floating):
        array = array.astype(np.float64)
    return array


def broadcast_shape(op: str, *shapes: Tuple[int, ...]) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeMismatch(op, shapes) from None


class Tensor:
    """Dense array that participates in the gradient tape"""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data.data if isinstance(data, Tensor) else data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.node_id = next(_ids)

    # --- graph plumbing -------------------------------------------------

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn) -> "Tensor":
        out = cls(data)
        if grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @staticmethod
    def lift(value: ArrayLike, like: Optional["Tensor"] = None) -> "Tensor":
        if isinstance(value, Tensor):
            return value
        return Tensor(value, dtype=like.dtype if like is not None else None)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # --- backward ---------------------------------------------------------

    def backward(self) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Raises NonScalarLoss unless self holds exactly one value. The
        recorded graph is released afterwards.
        """
        if self.data.size != 1:
            raise NonScalarLoss(f"backward needs a scalar loss, got shape {self.shape}")

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in visited:
                continue
            visited.add(node.node_id)
            stack.append((node, True))
            for parent in node._parents:
                if parent.node_id not in visited and parent.requires_grad:
                    stack.append((parent, False))

        grads = {self.node_id: np.ones_like(self.data)}
        for node in reversed(order):
            grad = grads.pop(node.node_id, None)
            if grad is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    grad = grad.astype(node.dtype, copy=False)
                    node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent.node_id in grads:
                    grads[parent.node_id] = grads[parent.node_id] + parent_grad
                else:
                    grads[parent.node_id] = parent_grad

        for node in order:
            if not node.is_leaf:
                node._parents = ()
                node._backward = None

    # --- arithmetic -------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other, self)
        broadcast_shape("add", self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data + other.data, (self, other),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-Tensor.lift(other, self))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other, self) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other, self)
        broadcast_shape("mul", self.shape, other.shape)
        a, b = self.data, other.data
        return Tensor._make(
            a * b, (self, other),
            lambda g: (unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other, self)
        broadcast_shape("div", self.shape, other.shape)
        a, b = self.data, other.data
        return Tensor._make(
            a / b, (self, other),
            lambda g: (unbroadcast(g / b, a.shape), unbroadcast(-g * a / (b * b), b.shape)),
        )

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other, self) / self

    def __pow__(self, exponent: float) -> "Tensor":
        a = self.data
        return Tensor._make(a ** exponent, (self,), lambda g: (g * exponent * a ** (exponent - 1),))

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other, self)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeMismatch("matmul", (a.shape, b.shape))
        try:
            out = a @ b
        except ValueError:
            raise ShapeMismatch("matmul", (a.shape, b.shape)) from None
        return Tensor._make(
            out, (self, other),
            lambda g: (
                unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape),
                unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape),
            ),
        )

    # --- indexing and shape ---------------------------------------------

    def __getitem__(self, index) -> "Tensor":
        if isinstance(index, Tensor):
            index = index.data.astype(np.int64)
        shape, dtype = self.shape, self.dtype

        def backward(g):
            full = np.zeros(shape, dtype=dtype)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._make(self.data[index], (self,), backward)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError:
            raise ShapeMismatch("reshape", (original, shape)) from None
        return Tensor._make(out, (self,), lambda g: (g.reshape(original),))

    def transpose(self, *axes) -> "Tensor":
        """Permute axes; with no arguments swap the last two"""
        if not axes:
            axes = tuple(range(self.ndim - 2)) + (self.ndim - 1, self.ndim - 2)
        inverse = tuple(np.argsort(axes))
        return Tensor._make(np.transpose(self.data, axes), (self,), lambda g: (np.transpose(g, inverse),))

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    # --- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def tensor(data: ArrayLike, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)
