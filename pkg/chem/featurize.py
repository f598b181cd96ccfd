"""
Fixed-width node/edge feature matrices for molecular graphs and batching
of several graphs into one disjoint union.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from chem.smiles import BondOrder, Hybridization, MolecularGraph
from shared.errors import EmptyMolecule

ELEMENT_VOCAB: Tuple[str, ...] = ("H", "B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Br", "I", "other")
_ELEMENT_SLOT = {1: 0, 5: 1, 6: 2, 7: 3, 8: 4, 9: 5, 14: 6, 15: 7, 16: 8, 17: 9, 35: 10, 53: 11}
MAX_DEGREE = 6
MAX_HCOUNT = 4
HYBRIDIZATIONS: Tuple[Hybridization, ...] = (
    Hybridization.SP, Hybridization.SP2, Hybridization.SP3, Hybridization.OTHER,
)
BOND_ORDERS: Tuple[BondOrder, ...] = (
    BondOrder.SINGLE, BondOrder.DOUBLE, BondOrder.TRIPLE, BondOrder.AROMATIC,
)

# Column blocks of the node matrix
ELEMENT_BLOCK = slice(0, len(ELEMENT_VOCAB))
DEGREE_BLOCK = slice(ELEMENT_BLOCK.stop, ELEMENT_BLOCK.stop + MAX_DEGREE + 1)
CHARGE_COLUMN = DEGREE_BLOCK.stop
HYBRID_BLOCK = slice(CHARGE_COLUMN + 1, CHARGE_COLUMN + 1 + len(HYBRIDIZATIONS))
AROMATIC_COLUMN = HYBRID_BLOCK.stop
HCOUNT_BLOCK = slice(AROMATIC_COLUMN + 1, AROMATIC_COLUMN + 1 + MAX_HCOUNT + 1)
F_NODE = HCOUNT_BLOCK.stop

BOND_BLOCK = slice(0, len(BOND_ORDERS))
CONJUGATED_COLUMN = BOND_BLOCK.stop
RING_COLUMN = CONJUGATED_COLUMN + 1
F_EDGE = RING_COLUMN + 1

CHARGE_SCALE = 1.0


@dataclass(frozen=True)
class FeaturizedGraph:
    """Node features (N, F_NODE), directed edge features (2B, F_EDGE), edge index (2, 2B)"""

    node_features: np.ndarray
    edge_features: np.ndarray
    edge_index: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_index.shape[1]


@dataclass(frozen=True)
class GraphBatch:
    """Disjoint union of featurized graphs"""

    node_features: np.ndarray
    edge_index: np.ndarray
    edge_features: np.ndarray
    membership: np.ndarray
    num_graphs: int
    node_offsets: np.ndarray
    edge_offsets: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]


def featurize_graph(graph: MolecularGraph) -> FeaturizedGraph:
    """
    Build node and edge feature matrices for one annotated graph.

    Args:
        graph: Parsed graph with rings, hybridization and hydrogens resolved

    Returns:
        FeaturizedGraph; every bond appears twice (u->v then v->u)
    """
    if graph.num_atoms == 0:
        raise EmptyMolecule("cannot featurize a molecule with zero atoms")

    nodes = np.zeros((graph.num_atoms, F_NODE), dtype=np.float64)
    for i, atom in enumerate(graph.atoms):
        nodes[i, ELEMENT_BLOCK.start + _ELEMENT_SLOT.get(atom.element, len(ELEMENT_VOCAB) - 1)] = 1.0
        nodes[i, DEGREE_BLOCK.start + min(atom.degree, MAX_DEGREE)] = 1.0
        nodes[i, CHARGE_COLUMN] = atom.formal_charge * CHARGE_SCALE
        nodes[i, HYBRID_BLOCK.start + HYBRIDIZATIONS.index(atom.hybridization)] = 1.0
        nodes[i, AROMATIC_COLUMN] = float(atom.aromatic)
        nodes[i, HCOUNT_BLOCK.start + min(atom.total_h, MAX_HCOUNT)] = 1.0

    edges = np.zeros((2 * graph.num_bonds, F_EDGE), dtype=np.float64)
    index = np.zeros((2, 2 * graph.num_bonds), dtype=np.int64)
    for b, bond in enumerate(graph.bonds):
        row = np.zeros(F_EDGE)
        row[BOND_BLOCK.start + BOND_ORDERS.index(bond.order)] = 1.0
        row[CONJUGATED_COLUMN] = float(bond.conjugated)
        row[RING_COLUMN] = float(bond.in_ring)
        edges[2 * b] = row
        edges[2 * b + 1] = row
        index[:, 2 * b] = (bond.begin, bond.end)
        index[:, 2 * b + 1] = (bond.end, bond.begin)

    return FeaturizedGraph(nodes, edges, index)


def batch_graphs(graphs: Sequence[FeaturizedGraph]) -> GraphBatch:
    """Concatenate graphs, shifting each graph's edge indices by its node offset."""
    if not graphs:
        raise ValueError("batch_graphs needs at least one graph")

    node_counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    edge_counts = np.array([g.num_edges for g in graphs], dtype=np.int64)
    node_offsets = np.concatenate([[0], np.cumsum(node_counts)])
    edge_offsets = np.concatenate([[0], np.cumsum(edge_counts)])

    edge_index = np.concatenate(
        [g.edge_index + node_offsets[k] for k, g in enumerate(graphs)], axis=1
    ) if edge_offsets[-1] else np.zeros((2, 0), dtype=np.int64)
    edge_features = np.concatenate([g.edge_features for g in graphs], axis=0)

    return GraphBatch(
        node_features=np.concatenate([g.node_features for g in graphs], axis=0),
        edge_index=edge_index,
        edge_features=edge_features,
        membership=np.repeat(np.arange(len(graphs)), node_counts),
        num_graphs=len(graphs),
        node_offsets=node_offsets,
        edge_offsets=edge_offsets,
    )


def unbatch_graphs(batch: GraphBatch) -> List[FeaturizedGraph]:
    graphs = []
    for k in range(batch.num_graphs):
        n0, n1 = batch.node_offsets[k], batch.node_offsets[k + 1]
        e0, e1 = batch.edge_offsets[k], batch.edge_offsets[k + 1]
        graphs.append(FeaturizedGraph(
            node_features=batch.node_features[n0:n1],
            edge_features=batch.edge_features[e0:e1],
            edge_index=batch.edge_index[:, e0:e1] - n0,
        ))
    return graphs
