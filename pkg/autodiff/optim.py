"""
AdamW with decoupled weight decay, global-norm gradient clipping,
reduce-on-plateau learning-rate scheduling and early stopping.
"""
import math
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from autodiff.nn import Parameter
from shared.errors import MissingGradient

NamedParams = Sequence[Tuple[str, Parameter]]


def _named(params: Union[NamedParams, Iterable[Parameter]]) -> List[Tuple[str, Parameter]]:
    named = []
    for i, item in enumerate(params):
        if isinstance(item, tuple):
            named.append(item)
        else:
            named.append((item.name or f"param{i}", item))
    return named


def adamw_step(
    params: Union[NamedParams, Iterable[Parameter]],
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """
    One AdamW update of every parameter in place.

    Weight decay shrinks the weights directly (w -= lr * wd * w) before the
    bias-corrected Adam step. Raises MissingGradient for a parameter whose
    gradient was never populated.
    """
    named = _named(params)
    for name, p in named:
        if p.grad is None:
            raise MissingGradient(name)
    for _, p in named:
        g = p.grad.astype(p.dtype, copy=False)
        p.step += 1
        if weight_decay:
            p.data = p.data - lr * weight_decay * p.data
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1 ** p.step)
        v_hat = p.v / (1.0 - beta2 ** p.step)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)


class AdamW:
    """AdamW optimizer"""

    def __init__(self, params: Union[NamedParams, Iterable[Parameter]], lr: float = 3e-4,
                 weight_decay: float = 1e-5, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = _named(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps

    def step(self) -> None:
        adamw_step(self.params, self.lr, self.weight_decay, self.betas[0], self.betas[1], self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None


def global_grad_norm(params: Iterable[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(params: Iterable[Parameter], max_norm: float) -> float:
    """
    Scale all gradients by max_norm / g when the global L2 norm g exceeds max_norm.

    Returns:
        The applied scale factor (1.0 when no clipping happened)
    """
    params = [p for p in params]
    norm = global_grad_norm(params)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    scale = max_norm / norm
    for p in params:
        if p.grad is not None:
            p.grad = p.grad * scale
    return scale


class PlateauScheduler:
    """
    Multiply the learning rate by ``factor`` once the metric has failed to
    improve by more than ``threshold`` for ``patience`` consecutive epochs.

    The epoch that sets a new best counts as the first epoch of the current
    plateau but never triggers a reduction itself; after a reduction the count
    starts again from zero. Reductions floored at ``min_lr`` are not counted.
    """

    def __init__(self, lr: float, factor: float = 0.7, patience: int = 30,
                 threshold: float = 1e-6, min_lr: float = 0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < factor < 1.0:
            raise ValueError("factor must lie in (0, 1)")
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = math.inf
        self.plateau_len = 0
        self.num_reductions = 0

    @property
    def epochs_since_improvement(self) -> int:
        return self.plateau_len

    def step(self, metric: float) -> float:
        if not math.isfinite(metric):
            raise ValueError(f"scheduler metric must be finite, got {metric}")
        improved = metric < self.best - self.threshold
        if improved:
            self.best = metric
            self.plateau_len = 1
        else:
            self.plateau_len += 1
        if not improved and self.plateau_len >= self.patience:
            new_lr = max(self.lr * self.factor, self.min_lr)
            if 0 < new_lr < self.lr:
                self.lr = new_lr
                self.num_reductions += 1
            self.plateau_len = 0
        return self.lr


def scheduler_step(sched: PlateauScheduler, val_metric: float) -> float:
    return sched.step(val_metric)


class EarlyStopping:
    """Signal a stop once ``patience`` epochs have passed since the best validation loss"""

    def __init__(self, patience: int = 50, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_epoch: Optional[int] = None

    def update(self, metric: float, epoch: int) -> bool:
        """Record the epoch's metric; True means training should stop now"""
        if metric < self.best - self.min_delta:
            self.best = metric
            self.best_epoch = epoch
            return False
        return self.best_epoch is not None and epoch - self.best_epoch >= self.patience

    @property
    def improved_at(self) -> Optional[int]:
        return self.best_epoch
