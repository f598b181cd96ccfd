"""
Unit tests for the graph attention layer, pooling, the mixture encoder and
the hybrid GNN.
"""
import numpy as np
import pytest

from autodiff.gradcheck import check_gradients
from autodiff.nn import DropoutContext
from autodiff.tensor import Tensor
from chem.featurize import F_EDGE, featurize_graph
from chem.smiles import parse_smiles
from predictors.configs import GnnConfig
from predictors.gat import GATLayer, add_self_loops, global_pool
from predictors.gnn import GnnModel, MixtureEncoder, mixture_encode
from predictors.inputs import GnnInputBuilder
from shared.errors import ConfigMismatch, EmptyGraphInBatch, ShapeMismatch

SMALL = {"hidden": 16, "heads": 2, "gat_layers": 2, "mixture_hidden": 8, "head_hidden": (16, 8),
         "drfp_width": 64, "dropout": 0.0}


def layer(dim=8, heads=2, seed=0, **kwargs):
    return GATLayer(dim, heads, F_EDGE, np.random.default_rng(seed), DropoutContext(seed), 0, **kwargs)


def zero_weights(module):
    for p in module.parameters():
        p.data = np.zeros_like(p.data)


@pytest.fixture
def acetate():
    return featurize_graph(parse_smiles("CCOC(C)=O"))


class TestGatLayer:
    """Tests for GATLayer"""

    def test_zero_weights_are_identity(self, acetate):
        gat = layer()
        zero_weights(gat)
        h = Tensor(np.random.default_rng(1).normal(size=(acetate.num_nodes, 8)))
        out = gat(h, acetate.edge_index, acetate.edge_features)
        assert np.array_equal(out.data, h.data)

    def test_zero_weight_stack_is_identity(self, acetate):
        stack = [layer(seed=s) for s in range(4)]
        h = Tensor(np.random.default_rng(2).normal(size=(acetate.num_nodes, 8)))
        out = h
        for gat in stack:
            zero_weights(gat)
            out = gat(out, acetate.edge_index, acetate.edge_features)
        assert np.array_equal(out.data, h.data)

    def test_single_node_attends_to_itself(self):
        methane = featurize_graph(parse_smiles("C"))
        gat = layer()
        gat(Tensor(np.ones((1, 8))), methane.edge_index, methane.edge_features)
        assert np.allclose(gat.last_attention, 1.0)

    def test_attention_normalized_per_node(self, acetate):
        gat = layer()
        h = Tensor(np.random.default_rng(3).normal(size=(acetate.num_nodes, 8)))
        gat(h, acetate.edge_index, acetate.edge_features)
        index, _ = add_self_loops(acetate.edge_index, acetate.edge_features, acetate.num_nodes)
        sums = np.zeros((acetate.num_nodes, 2))
        np.add.at(sums, index[1], gat.last_attention)
        assert np.allclose(sums, 1.0)

    def test_permutation_equivariance(self, acetate):
        rng = np.random.default_rng(4)
        gat = layer()
        h = rng.normal(size=(acetate.num_nodes, 8))
        perm = rng.permutation(acetate.num_nodes)
        inverse = np.argsort(perm)
        out = gat(Tensor(h), acetate.edge_index, acetate.edge_features).data
        permuted = gat(Tensor(h[perm]), inverse[acetate.edge_index], acetate.edge_features).data
        assert np.allclose(permuted, out[perm], atol=1e-6)

    def test_mean_aggregation_variant(self, acetate):
        gat = layer(use_attention=False)
        names = [n for n, _ in gat.named_parameters()]
        assert names == ["value.weight"]
        out = gat(Tensor(np.ones((acetate.num_nodes, 8))), acetate.edge_index, acetate.edge_features)
        assert out.shape == (acetate.num_nodes, 8)

    def test_heads_must_divide_width(self):
        with pytest.raises(ShapeMismatch):
            layer(dim=10, heads=3)

    def test_width_checked(self, acetate):
        with pytest.raises(ShapeMismatch):
            layer()(Tensor(np.ones((acetate.num_nodes, 4))), acetate.edge_index, acetate.edge_features)

    def test_gradients(self, acetate):
        gat = layer()
        h = Tensor(np.random.default_rng(5).normal(size=(acetate.num_nodes, 8)), requires_grad=True)
        params = [h] + gat.parameters()
        errors = check_gradients(lambda: (gat(h, acetate.edge_index, acetate.edge_features) ** 2).sum(), params)
        assert max(errors.values()) < 1e-4


class TestGlobalPool:
    """Tests for global_pool"""

    def test_single_node(self):
        pooled = global_pool(Tensor([[1.5, -2.0]]), [0], 1)
        assert pooled.data.tolist() == [[1.5, -2.0, 1.5, -2.0]]

    def test_mean_and_max(self):
        pooled = global_pool(Tensor([[0.0], [2.0]]), [0, 0], 1)
        assert pooled.data.tolist() == [[1.0, 2.0]]

    def test_shuffle_invariance(self):
        rng = np.random.default_rng(6)
        h = rng.normal(size=(7, 4))
        membership = np.array([0, 0, 0, 1, 1, 1, 1])
        perm = np.concatenate([rng.permutation(3), 3 + rng.permutation(4)])
        a = global_pool(Tensor(h), membership, 2).data
        b = global_pool(Tensor(h[perm]), membership, 2).data
        assert np.allclose(a, b, atol=1e-12)

    def test_empty_graph(self):
        with pytest.raises(EmptyGraphInBatch):
            global_pool(Tensor(np.ones((2, 3))), [0, 0], 2)


class TestMixtureEncoder:
    """Tests for mixture_encode"""

    def test_output_width(self):
        encoder = MixtureEncoder(2 * 4 + 3, 6, np.random.default_rng(0))
        e = Tensor(np.ones((5, 4)))
        out = mixture_encode(encoder, e, e, np.zeros(5), np.zeros(5), np.zeros(5))
        assert out.shape == (5, 6)

    def test_zero_weights_zero_output(self):
        encoder = MixtureEncoder(11, 6, np.random.default_rng(0))
        zero_weights(encoder)
        e = Tensor(np.random.default_rng(1).normal(size=(3, 4)))
        out = mixture_encode(encoder, e, e, np.full(3, 0.5), np.ones(3), np.ones(3))
        assert np.all(out.data == 0.0)

    def test_gradient_wrt_pct(self):
        encoder = MixtureEncoder(11, 6, np.random.default_rng(2))
        rng = np.random.default_rng(3)
        e_a, e_b = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(3, 4)))
        pct = Tensor(rng.uniform(size=3), requires_grad=True)
        errors = check_gradients(
            lambda: (mixture_encode(encoder, e_a, e_b, pct, np.zeros(3), np.zeros(3)) ** 2).sum(), [pct])
        assert errors[0] < 1e-4


class TestGnnConfig:
    """Tests for GnnConfig"""

    def test_defaults(self):
        cfg = GnnConfig()
        assert (cfg.hidden, cfg.gat_layers, cfg.heads, cfg.dropout) == (256, 4, 8, 0.15)

    def test_heads_divide_hidden(self):
        with pytest.raises(ValueError):
            GnnConfig(hidden=100, heads=8)

    def test_ablation_widths(self):
        full = GnnConfig()
        pooled = 2 * full.hidden
        assert full.fusion_width - GnnConfig(use_drfp=False).fusion_width == 2048
        assert full.fusion_width - GnnConfig(use_reactant_product_graphs=False).fusion_width == 3 * pooled
        assert full.fusion_width - GnnConfig(use_mixture_encoder=False).fusion_width == full.mixture_hidden
        assert GnnConfig(use_attention=False).fusion_width == full.fusion_width

    def test_digest_tracks_values(self):
        assert GnnConfig().digest() == GnnConfig().digest()
        assert GnnConfig().digest() != GnnConfig(use_drfp=False).digest()


class TestGnnModel:
    """Tests for GnnModel forward passes on synthetic rows"""

    @pytest.fixture
    def rows(self, single_data):
        return single_data.dataset.records[:6]

    def build(self, context, rows, **flags):
        config = GnnConfig(**{**SMALL, **flags})
        inputs = GnnInputBuilder(context, config).build(rows)
        return GnnModel(config, seed=0), inputs

    def test_outputs_in_unit_interval(self, context, rows):
        model, inputs = self.build(context, rows)
        out = model.eval()(inputs).data
        assert out.shape == (len(rows), 3)
        assert np.all((out > 0) & (out < 1))

    def test_fixed_seed_is_bit_identical(self, context, rows):
        a, inputs = self.build(context, rows)
        b, _ = self.build(context, rows)
        assert np.array_equal(a(inputs).data, b(inputs).data)

    def test_head_width_follows_ablation(self, context, rows):
        for flags in ({}, {"use_drfp": False}, {"use_reactant_product_graphs": False},
                      {"use_mixture_encoder": False}, {"use_attention": False}):
            model, inputs = self.build(context, rows, **flags)
            assert model.head1.in_features == model.config.fusion_width
            assert model(inputs).shape == (len(rows), 3)

    def test_mixture_rows(self, mixture_context, mixture_data):
        rows = [r for r in mixture_data.dataset.records if not r.is_single_solvent][:5]
        model, inputs = self.build(mixture_context, rows)
        assert np.any(inputs.solvent_a != inputs.solvent_b)
        assert model(inputs).shape == (5, 3)

    def test_missing_fingerprint_block(self, context, rows):
        model, inputs = self.build(context, rows)
        no_fp = GnnInputBuilder(context, GnnConfig(**{**SMALL, "use_drfp": False})).build(rows)
        with pytest.raises(ConfigMismatch):
            model(no_fp)
        assert inputs.drfp is not None

    def test_builder_rejects_width_mismatch(self, context):
        with pytest.raises(ConfigMismatch):
            GnnInputBuilder(context, GnnConfig(**{**SMALL, "drfp_width": 128}))

    def test_solvent_graphs_cached(self, context, rows):
        builder = GnnInputBuilder(context, GnnConfig(**SMALL))
        builder.build(rows)
        size = builder.cache_size
        builder.build(rows)
        assert builder.cache_size == size
