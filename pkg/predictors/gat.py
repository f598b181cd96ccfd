"""
Residual multi-head graph attention and graph-level pooling.
"""
from typing import Optional, Tuple

import numpy as np

from autodiff import ops
from autodiff.nn import Dropout, DropoutContext, Linear, Module, Parameter, uniform_init
from autodiff.tensor import Tensor
from shared.errors import EmptyGraphInBatch, ShapeMismatch


def add_self_loops(edge_index: np.ndarray, edge_features: np.ndarray, num_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Append one (v -> v) edge per node; self-loop edge features are zero"""
    loops = np.arange(num_nodes, dtype=np.int64)
    index = np.concatenate([edge_index.astype(np.int64), np.stack([loops, loops])], axis=1)
    features = np.concatenate([
        edge_features,
        np.zeros((num_nodes, edge_features.shape[1]), dtype=edge_features.dtype),
    ], axis=0)
    return index, features


class GATLayer(Module):
    """
    out = h + dropout(silu(concat_heads(sum_u alpha_uv^k * W^k h_u)))

    Scores are leaky_relu(a_src . z_u + a_dst . z_v + P e_uv) per head,
    normalized by a softmax over each node's in-edges (self-loop included).
    With ``use_attention`` off the layer averages in-neighbour messages.
    """

    def __init__(self, dim: int, heads: int, edge_dim: int, rng: np.random.Generator,
                 context: DropoutContext, layer_id: int, dropout: float = 0.0,
                 use_attention: bool = True, leaky_slope: float = 0.2, dtype=np.float64):
        if dim % heads:
            raise ShapeMismatch("gat_layer", ((dim,), (heads,)))
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.use_attention = use_attention
        self.leaky_slope = leaky_slope
        self.value = Linear(dim, dim, rng, bias=False, dtype=dtype)
        if use_attention:
            self.att_src = Parameter(uniform_init(rng, (heads, self.head_dim), self.head_dim, dtype))
            self.att_dst = Parameter(uniform_init(rng, (heads, self.head_dim), self.head_dim, dtype))
            self.edge_score = Linear(edge_dim, heads, rng, bias=False, dtype=dtype)
        self.dropout = Dropout(dropout, context, layer_id)
        self.last_attention: Optional[np.ndarray] = None

    def forward(self, h: Tensor, edge_index: np.ndarray, edge_features: np.ndarray) -> Tensor:
        n = h.shape[0]
        if h.ndim != 2 or h.shape[1] != self.dim:
            raise ShapeMismatch("gat_layer", (h.shape, (n, self.dim)))
        index, feats = add_self_loops(edge_index, edge_features, n)
        src, dst = index[0], index[1]
        num_edges = src.shape[0]

        z = self.value(h).reshape(n, self.heads, self.head_dim)
        messages = z[src]
        if self.use_attention:
            s_src = (z * self.att_src).sum(axis=-1)
            s_dst = (z * self.att_dst).sum(axis=-1)
            scores = s_src[src] + s_dst[dst] + self.edge_score(Tensor(feats.astype(h.dtype)))
            alpha = ops.segment_softmax(ops.leaky_relu(scores, self.leaky_slope), dst, n)
            self.last_attention = alpha.data
            aggregated = ops.segment_sum(messages * alpha.reshape(num_edges, self.heads, 1), dst, n)
        else:
            aggregated = ops.segment_mean(messages, dst, n)
        update = ops.silu(aggregated.reshape(n, self.dim))
        return h + self.dropout(update)


def gat_layer(layer: GATLayer, node_states: Tensor, edge_index: np.ndarray, edge_features: np.ndarray) -> Tensor:
    return layer(node_states, edge_index, edge_features)


def global_pool(node_states: Tensor, membership: np.ndarray, num_graphs: int) -> Tensor:
    """concat[mean; max] over each graph's nodes -> (num_graphs, 2D)"""
    membership = np.asarray(membership, dtype=np.int64)
    counts = np.bincount(membership, minlength=num_graphs)
    if counts.shape[0] > num_graphs or np.any(counts[:num_graphs] == 0):
        raise EmptyGraphInBatch(f"every graph needs at least one node, counts={counts.tolist()}")
    return ops.concat([
        ops.segment_mean(node_states, membership, num_graphs),
        ops.segment_max(node_states, membership, num_graphs),
    ], axis=-1)
