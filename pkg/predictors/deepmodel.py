"""
DeepModel: input projection, one multi-head self-attention block over the
projected vector viewed as a token sequence, residual SwiGLU blocks and a
two-layer regression head. ``plain_mlp`` swaps attention and SwiGLU for
plain residual SiLU blocks.
"""
from typing import Optional

import numpy as np

from autodiff import ops
from autodiff.nn import Dropout, DropoutContext, LayerIds, Linear, Module, Parameter, uniform_init
from autodiff.tensor import Tensor
from predictors.configs import DeepModelConfig
from shared.errors import ShapeMismatch

N_OUTPUTS = 3


def swiglu(x: Tensor, gate_value: Linear, gate: Linear) -> Tensor:
    """(W1 x + b1) * silu(W2 x + b2)"""
    return gate_value(x) * ops.silu(gate(x))


class SwiGLUBlock(Module):
    def __init__(self, dim: int, rng: np.random.Generator, context: DropoutContext, layer_id: int,
                 dropout: float, dtype=np.float64):
        self.w1 = Linear(dim, dim, rng, dtype=dtype)
        self.w2 = Linear(dim, dim, rng, dtype=dtype)
        self.dropout = Dropout(dropout, context, layer_id)

    def forward(self, h: Tensor) -> Tensor:
        return h + self.dropout(swiglu(h, self.w1, self.w2))


class ResidualSiluBlock(Module):
    def __init__(self, dim: int, rng: np.random.Generator, context: DropoutContext, layer_id: int,
                 dropout: float, dtype=np.float64):
        self.fc = Linear(dim, dim, rng, dtype=dtype)
        self.dropout = Dropout(dropout, context, layer_id)

    def forward(self, h: Tensor) -> Tensor:
        return h + self.dropout(ops.silu(self.fc(h)))


class TokenSelfAttention(Module):
    """Multi-head self-attention with a residual connection over (B, T, W) tokens"""

    def __init__(self, tokens: int, width: int, heads: int, rng: np.random.Generator,
                 context: DropoutContext, layer_id: int, dropout: float, dtype=np.float64):
        self.tokens = tokens
        self.width = width
        self.heads = heads
        self.head_dim = width // heads
        self.position = Parameter(uniform_init(rng, (tokens, width), width, dtype))
        self.query = Linear(width, width, rng, dtype=dtype)
        self.key = Linear(width, width, rng, dtype=dtype)
        self.value = Linear(width, width, rng, dtype=dtype)
        self.out = Linear(width, width, rng, dtype=dtype)
        self.dropout = Dropout(dropout, context, layer_id)
        self.last_attention: Optional[np.ndarray] = None

    def _split(self, x: Tensor, batch: int) -> Tensor:
        return x.reshape(batch, self.tokens, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def forward(self, tokens: Tensor) -> Tensor:
        batch = tokens.shape[0]
        x = tokens + self.position
        q = self._split(self.query(x), batch)
        k = self._split(self.key(x), batch)
        v = self._split(self.value(x), batch)
        weights = ops.softmax((q @ k.transpose()) * (1.0 / np.sqrt(self.head_dim)), axis=-1)
        self.last_attention = weights.data
        mixed = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, self.tokens, self.width)
        return tokens + self.dropout(self.out(mixed))


class DeepModel(Module):
    def __init__(self, input_dim: int, config: DeepModelConfig, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.input_dim = input_dim
        self.config = config
        self.dtype = np.dtype(dtype)
        self.dropout_context = DropoutContext(seed)
        ids = LayerIds()
        d = config.hidden

        self.project = Linear(input_dim, d, rng, dtype=dtype)
        if config.plain_mlp:
            self.blocks = [
                ResidualSiluBlock(d, rng, self.dropout_context, ids(), config.dropout, dtype)
                for _ in range(config.swiglu_blocks)
            ]
        else:
            self.attention = TokenSelfAttention(config.tokens, config.token_width, config.heads, rng,
                                                self.dropout_context, ids(), config.dropout, dtype)
            self.blocks = [
                SwiGLUBlock(d, rng, self.dropout_context, ids(), config.dropout, dtype)
                for _ in range(config.swiglu_blocks)
            ]
        self.head1 = Linear(d, config.head_hidden, rng, dtype=dtype)
        self.head_dropout = Dropout(config.head_dropout, self.dropout_context, ids())
        self.head_out = Linear(config.head_hidden, N_OUTPUTS, rng, dtype=dtype)

    def set_step(self, step: int) -> None:
        self.dropout_context.set_step(step)

    def forward(self, features) -> Tensor:
        x = Tensor.lift(features)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatch("deepmodel_forward", (x.shape, (x.shape[0] if x.ndim else 0, self.input_dim)))
        if x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype))
        batch = x.shape[0]
        h = ops.silu(self.project(x))
        if not self.config.plain_mlp:
            tokens = h.reshape(batch, self.config.tokens, self.config.token_width)
            h = self.attention(tokens).reshape(batch, self.config.hidden)
        for block in self.blocks:
            h = block(h)
        h = self.head_dropout(ops.silu(self.head1(h)))
        return self.head_out(h)


def deepmodel_forward(model: DeepModel, features) -> Tensor:
    return model(features)
