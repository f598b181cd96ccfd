"""
Parameters and composable modules for the neural predictors.
"""
from typing import Dict, Iterator, List, Tuple

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from shared.errors import CheckpointMismatch


class Parameter(Tensor):
    """Trainable tensor with AdamW moment buffers and step count"""

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def reset_state(self) -> None:
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0


class DropoutContext:
    """
    Shared (seed, step) for every dropout layer of one model.

    Each layer keys its masks by (seed, layer id) and counts calls within a
    step, so repeated calls in one step draw distinct masks.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.step = 0
        self._calls: Dict[int, int] = {}

    def set_step(self, step: int) -> None:
        self.step = int(step)
        self._calls.clear()

    def next_counter(self, layer_id: int) -> Tuple[int, int]:
        call = self._calls.get(layer_id, 0)
        self._calls[layer_id] = call + 1
        return self.step, call


class Module:
    """Base class; parameters and submodules are discovered from attributes in definition order"""

    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, item in enumerate(value):
                    yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Parameter]]:
        found = []
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                found.append((full, value))
            else:
                found.extend(value.named_parameters(full + "."))
        return found

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointMismatch(f"parameter names differ: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            array = np.asarray(state[name])
            if array.shape != p.shape:
                raise CheckpointMismatch(f"{name}: shape {array.shape} != {p.shape}")
            p.data = array.astype(p.dtype).copy()
            p.grad = None


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    """y = x W + b with W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, dtype=np.float64):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(uniform_init(rng, (in_features, out_features), in_features, dtype))
        self.bias = Parameter(uniform_init(rng, (out_features,), in_features, dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class Dropout(Module):
    def __init__(self, p: float, context: DropoutContext, layer_id: int):
        self.p = p
        self.context = context
        self.layer_id = layer_id

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        counter = self.context.next_counter(self.layer_id)
        return ops.dropout(x, self.p, True, (self.context.seed, self.layer_id), counter)


class LayerIds:
    """Sequential dropout layer ids local to one model"""

    def __init__(self):
        self._next = 0

    def __call__(self) -> int:
        value = self._next
        self._next += 1
        return value
