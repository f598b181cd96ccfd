"""
Hybrid GNN: separate reactant/solvent embeddings, a shared residual GAT
stack, mean+max pooling, a learned mixture encoder and a fused sigmoid head.
"""
from typing import List, Optional

import numpy as np

from autodiff import ops
from autodiff.nn import Dropout, DropoutContext, LayerIds, Linear, Module
from autodiff.tensor import Tensor
from chem.featurize import F_EDGE, F_NODE, GraphBatch
from predictors.configs import GnnConfig
from predictors.gat import GATLayer, global_pool
from predictors.inputs import GnnInputs
from shared.errors import ConfigMismatch, ShapeMismatch

N_OUTPUTS = 3


class MixtureEncoder(Module):
    """e_mix = W2 silu(W1 [e_A; e_B; pct'; T'; tau'] + b1) + b2"""

    def __init__(self, in_features: int, hidden: int, rng: np.random.Generator, dtype=np.float64):
        self.fc1 = Linear(in_features, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, hidden, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.silu(self.fc1(x)))


def mixture_encode(encoder: MixtureEncoder, e_a: Tensor, e_b: Tensor, pct_b, temperature, residence_time) -> Tensor:
    """Encode a solvent pair and its (already normalized) conditions"""
    def column(v) -> Tensor:
        t = Tensor.lift(v, e_a)
        return t.reshape(e_a.shape[0], 1)

    return encoder(ops.concat([e_a, e_b, column(pct_b), column(temperature), column(residence_time)], axis=-1))


class GnnModel(Module):
    """Predicts (SM, P2, P3) yields in (0, 1)"""

    def __init__(self, config: GnnConfig, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.config = config
        self.dtype = np.dtype(dtype)
        self.dropout_context = DropoutContext(seed)
        ids = LayerIds()
        d = config.hidden

        self.solvent_embed = Linear(F_NODE, d, rng, dtype=dtype)
        if config.use_reactant_product_graphs:
            self.reactant_embed = Linear(F_NODE, d, rng, dtype=dtype)
        self.gat = [
            GATLayer(d, config.heads, F_EDGE, rng, self.dropout_context, ids(), config.dropout,
                     config.use_attention, config.leaky_slope, dtype)
            for _ in range(config.gat_layers)
        ]
        if config.use_mixture_encoder:
            self.mixture = MixtureEncoder(4 * d + 3, config.mixture_hidden, rng, dtype)
        h1, h2 = config.head_hidden
        self.head1 = Linear(config.fusion_width, h1, rng, dtype=dtype)
        self.head2 = Linear(h1, h2, rng, dtype=dtype)
        self.head_out = Linear(h2, N_OUTPUTS, rng, dtype=dtype)
        self.head_dropout1 = Dropout(config.dropout, self.dropout_context, ids())
        self.head_dropout2 = Dropout(config.dropout, self.dropout_context, ids())

    def set_step(self, step: int) -> None:
        self.dropout_context.set_step(step)

    def embed_graphs(self, batch: GraphBatch, embed: Linear) -> Tensor:
        """Per-graph embeddings (num_graphs, 2D)"""
        h = embed(Tensor(batch.node_features.astype(self.dtype)))
        edge_features = batch.edge_features.astype(self.dtype)
        for layer in self.gat:
            h = layer(h, batch.edge_index, edge_features)
        return global_pool(h, batch.membership, batch.num_graphs)

    def _check_inputs(self, inputs: GnnInputs) -> None:
        cfg = self.config
        if cfg.use_drfp and inputs.drfp is None:
            raise ConfigMismatch("use_drfp is set but no fingerprint block was supplied")
        if not cfg.use_drfp and inputs.drfp is not None:
            raise ConfigMismatch("fingerprints supplied to a model built without use_drfp")
        if cfg.use_drfp and inputs.drfp.shape != (inputs.batch_size, cfg.drfp_width):
            raise ConfigMismatch(f"fingerprint block shape {inputs.drfp.shape} != ({inputs.batch_size}, {cfg.drfp_width})")
        if cfg.use_reactant_product_graphs and inputs.reactant_graphs is None:
            raise ConfigMismatch("use_reactant_product_graphs is set but no reactant graphs were supplied")
        if not cfg.use_reactant_product_graphs and inputs.reactant_graphs is not None:
            raise ConfigMismatch("reactant graphs supplied to a model built without them")
        if inputs.reactant_graphs is not None and inputs.reactant_graphs.num_graphs != 3:
            raise ShapeMismatch("gnn_forward", ((inputs.reactant_graphs.num_graphs,), (3,)))

    def forward(self, inputs: GnnInputs) -> Tensor:
        self._check_inputs(inputs)
        b = inputs.batch_size
        cond = Tensor(inputs.conditions.astype(self.dtype))

        solvents = self.embed_graphs(inputs.solvent_graphs, self.solvent_embed)
        e_a = solvents[inputs.solvent_a]
        e_b = solvents[inputs.solvent_b]

        blocks: List[Tensor] = []
        if self.config.use_reactant_product_graphs:
            reactants = self.embed_graphs(inputs.reactant_graphs, self.reactant_embed)
            flat = reactants.reshape(1, 3 * reactants.shape[1])
            blocks.append(flat[np.zeros(b, dtype=np.int64)])
        blocks.extend([e_a, e_b])
        if self.config.use_mixture_encoder:
            blocks.append(mixture_encode(self.mixture, e_a, e_b, cond[:, 2], cond[:, 0], cond[:, 1]))
        if self.config.use_drfp:
            blocks.append(Tensor(inputs.drfp.astype(self.dtype)))
        blocks.append(cond)

        fused = ops.concat(blocks, axis=-1)
        h = self.head_dropout1(ops.silu(self.head1(fused)))
        h = self.head_dropout2(ops.silu(self.head2(h)))
        return ops.sigmoid(self.head_out(h))


def gnn_forward(model: GnnModel, inputs: GnnInputs) -> Tensor:
    return model(inputs)


def fusion_width(config: Optional[GnnConfig] = None) -> int:
    return (config or GnnConfig()).fusion_width
