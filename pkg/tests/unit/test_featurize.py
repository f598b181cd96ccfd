"""
Unit tests for node/edge featurization and graph batching.
"""
import numpy as np
import pytest

from chem.featurize import (
    AROMATIC_COLUMN,
    BOND_BLOCK,
    CHARGE_COLUMN,
    DEGREE_BLOCK,
    ELEMENT_BLOCK,
    ELEMENT_VOCAB,
    F_EDGE,
    F_NODE,
    HCOUNT_BLOCK,
    HYBRID_BLOCK,
    batch_graphs,
    featurize_graph,
    unbatch_graphs,
)
from chem.smiles import MolecularGraph, parse_smiles
from chem.solvents import load_roster
from shared.errors import EmptyMolecule


def featurize(smiles):
    return featurize_graph(parse_smiles(smiles))


class TestFeaturizeGraph:
    """Tests for featurize_graph"""

    def test_widths_are_constant(self):
        for smiles in list(load_roster().values()) + ["C=CCOc1ccccc1O", "C=CCc1cccc(O)c1O"]:
            graph = featurize(smiles)
            assert graph.node_features.shape[1] == F_NODE
            assert graph.edge_features.shape[1] == F_EDGE

    def test_one_hot_blocks_sum_to_one(self):
        nodes = featurize("CC(=O)N(C)C").node_features
        for block in (ELEMENT_BLOCK, DEGREE_BLOCK, HYBRID_BLOCK, HCOUNT_BLOCK):
            assert np.all(nodes[:, block].sum(axis=1) == 1.0)

    def test_methane(self):
        """Degree slot 0, H-count slot 4"""
        row = featurize("C").node_features[0]
        assert row[DEGREE_BLOCK][0] == 1.0
        assert row[HCOUNT_BLOCK][4] == 1.0
        assert row[ELEMENT_BLOCK][ELEMENT_VOCAB.index("C")] == 1.0

    def test_charge_is_raw_integer(self):
        row = featurize("[NH4+]").node_features[0]
        assert row[CHARGE_COLUMN] == 1.0

    def test_unknown_element_goes_to_other(self):
        row = featurize("[Na+]").node_features[0]
        assert row[ELEMENT_BLOCK][ELEMENT_VOCAB.index("other")] == 1.0

    def test_benzene_symmetry(self):
        graph = featurize("c1ccccc1")
        assert np.all(graph.node_features == graph.node_features[0])
        assert graph.num_edges == 12
        assert np.all(graph.edge_features == graph.edge_features[0])
        assert graph.edge_features[0, BOND_BLOCK][3] == 1.0
        assert np.all(graph.node_features[:, AROMATIC_COLUMN] == 1.0)

    def test_edges_emitted_both_directions(self):
        graph = featurize("CCO")
        index = graph.edge_index
        for b in range(0, graph.num_edges, 2):
            assert (index[0, b], index[1, b]) == (index[1, b + 1], index[0, b + 1])
            assert np.array_equal(graph.edge_features[b], graph.edge_features[b + 1])

    def test_relabeling_permutes_rows(self):
        """Writing ethanol backwards reverses the node rows"""
        forward = featurize("CCO").node_features
        backward = featurize("OCC").node_features
        assert np.array_equal(forward, backward[::-1])

    def test_empty_molecule(self):
        with pytest.raises(EmptyMolecule):
            featurize_graph(MolecularGraph((), ()))


class TestBatchGraphs:
    """Tests for batch_graphs and unbatch_graphs"""

    def test_two_methanes(self):
        batch = batch_graphs([featurize("C"), featurize("C")])
        assert batch.num_nodes == 2
        assert batch.membership.tolist() == [0, 1]
        assert batch.edge_index.shape == (2, 0)

    def test_offsets(self):
        ethanol, benzene = featurize("CCO"), featurize("c1ccccc1")
        batch = batch_graphs([ethanol, benzene])
        assert batch.num_nodes == 9
        assert batch.membership.tolist() == [0] * 3 + [1] * 6
        tail = batch.edge_index[:, ethanol.num_edges:]
        assert np.array_equal(tail, benzene.edge_index + 3)
        assert np.all(np.diff(batch.membership) >= 0)

    def test_round_trip(self):
        graphs = [featurize(s) for s in ("CCO", "c1ccccc1", "C", "CS(C)=O")]
        again = batch_graphs(unbatch_graphs(batch_graphs(graphs)))
        first = batch_graphs(graphs)
        assert np.array_equal(again.node_features, first.node_features)
        assert np.array_equal(again.edge_index, first.edge_index)
        assert np.array_equal(again.edge_features, first.edge_features)

    def test_empty_list(self):
        with pytest.raises(ValueError):
            batch_graphs([])
