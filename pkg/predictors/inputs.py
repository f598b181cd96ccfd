"""
Turning reaction records into model inputs: normalized conditions, per-row
fingerprints, baseline matrices and batched molecular graphs for the GNN.
"""
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from chem.descriptors import DescriptorSet, baseline_matrix
from chem.drfp import Fingerprint, drfp_fingerprint
from chem.featurize import FeaturizedGraph, GraphBatch, batch_graphs, featurize_graph
from chem.smiles import parse_smiles
from chem.solvents import reference_smiles
from predictors.configs import GnnConfig
from shared.errors import ConfigMismatch, UnknownSolvent
from shared.log import get_logger
from shared.models import ReactionRecord, ReactionSmiles, SolventRef

logger = get_logger("Inputs")

T_CENTER = 60.0
T_SCALE = 60.0
TAU_SCALE = 300.0
PCT_SCALE = 100.0


def normalize_conditions(temperature_c, residence_time_s, pct_b) -> np.ndarray:
    """Columns (T', tau', pct') = ((T-60)/60, tau/300, pct/100)"""
    t = (np.asarray(temperature_c, dtype=np.float64) - T_CENTER) / T_SCALE
    tau = np.asarray(residence_time_s, dtype=np.float64) / TAU_SCALE
    pct = np.asarray(pct_b, dtype=np.float64) / PCT_SCALE
    return np.stack([t, tau, pct], axis=-1)


def record_conditions(records: Sequence[ReactionRecord]) -> np.ndarray:
    """Normalized conditions; single-solvent rows carry pct 0"""
    return normalize_conditions(
        [r.temperature_c for r in records],
        [r.residence_time_s for r in records],
        [0.0 if r.is_single_solvent else r.pct_b for r in records],
    )


def target_matrix(records: Sequence[ReactionRecord]) -> np.ndarray:
    return np.array([r.targets() for r in records], dtype=np.float64).reshape(len(records), 3)


@dataclass
class FeatureContext:
    """Everything besides the records that feature construction needs"""

    reaction: ReactionSmiles
    tables: DescriptorSet
    drfp_radius: int = 3
    drfp_width: int = 2048
    reaction_fp: Optional[Fingerprint] = None

    def __post_init__(self):
        if self.reaction_fp is None:
            self.reaction_fp = drfp_fingerprint(
                [self.reaction.starting_material],
                [self.reaction.product_2, self.reaction.product_3],
                self.drfp_radius, self.drfp_width,
            )

    def row_fingerprint(self, record: ReactionRecord) -> Fingerprint:
        """A per-row fingerprint from the dataset takes precedence over the computed one"""
        if record.drfp_hex:
            return Fingerprint.from_hex(record.drfp_hex, self.drfp_width, self.drfp_radius)
        return self.reaction_fp

    def fingerprint_matrix(self, records: Sequence[ReactionRecord]) -> np.ndarray:
        return np.stack([self.row_fingerprint(r).as_float() for r in records]) if records \
            else np.zeros((0, self.drfp_width))

    def baseline(self, records: Sequence[ReactionRecord]) -> np.ndarray:
        return baseline_matrix(records, self.tables, {r.row_id: self.row_fingerprint(r) for r in records})

    def baseline_width(self) -> int:
        return 2 + self.tables.n_spange + self.tables.n_acs + self.drfp_width


@dataclass(frozen=True)
class GnnInputs:
    """One mini-batch for the GNN"""

    solvent_graphs: GraphBatch
    solvent_a: np.ndarray          # (B,) index into solvent_graphs
    solvent_b: np.ndarray          # (B,) equals solvent_a for single-solvent rows
    conditions: np.ndarray         # (B, 3) columns T', tau', pct'
    reactant_graphs: Optional[GraphBatch] = None   # SM, P2, P3
    drfp: Optional[np.ndarray] = None              # (B, width)

    @property
    def batch_size(self) -> int:
        return self.conditions.shape[0]


def solvent_smiles(ref: SolventRef) -> str:
    if ref.smiles:
        return ref.smiles
    smiles = reference_smiles(ref.name)
    if smiles is None:
        raise UnknownSolvent(ref.name, "roster")
    return smiles


class GnnInputBuilder:
    """
    Builds GnnInputs, parsing and featurizing every molecule once.

    Solvent graphs are cached by SMILES; each batch embeds only the distinct
    solvents it uses, and rows index into that set.
    """

    def __init__(self, context: FeatureContext, config: GnnConfig):
        if config.use_drfp and config.drfp_width != context.drfp_width:
            raise ConfigMismatch(
                f"model expects {config.drfp_width}-bit fingerprints, context provides {context.drfp_width}"
            )
        self.context = context
        self.config = config
        self._lock = threading.Lock()
        self._graphs: Dict[str, FeaturizedGraph] = {}
        self._reactants: Optional[GraphBatch] = None

    def graph(self, smiles: str) -> FeaturizedGraph:
        with self._lock:
            cached = self._graphs.get(smiles)
        if cached is None:
            cached = featurize_graph(parse_smiles(smiles))
            with self._lock:
                cached = self._graphs.setdefault(smiles, cached)
        return cached

    @property
    def cache_size(self) -> int:
        return len(self._graphs)

    def reactant_batch(self) -> GraphBatch:
        if self._reactants is None:
            reaction = self.context.reaction
            self._reactants = batch_graphs([
                self.graph(reaction.starting_material),
                self.graph(reaction.product_2),
                self.graph(reaction.product_3),
            ])
        return self._reactants

    def build(self, records: Sequence[ReactionRecord]) -> GnnInputs:
        order: List[str] = []
        slots: Dict[str, int] = {}

        def slot(ref: SolventRef) -> int:
            smiles = solvent_smiles(ref)
            if smiles not in slots:
                slots[smiles] = len(order)
                order.append(smiles)
            return slots[smiles]

        a_idx, b_idx = [], []
        for record in records:
            a = slot(record.solvent_a)
            a_idx.append(a)
            b_idx.append(a if record.solvent_b is None else slot(record.solvent_b))

        return GnnInputs(
            solvent_graphs=batch_graphs([self.graph(s) for s in order]),
            solvent_a=np.array(a_idx, dtype=np.int64),
            solvent_b=np.array(b_idx, dtype=np.int64),
            conditions=record_conditions(records),
            reactant_graphs=self.reactant_batch() if self.config.use_reactant_product_graphs else None,
            drfp=self.context.fingerprint_matrix(records) if self.config.use_drfp else None,
        )


def batch_slices(n: int, batch_size: int, order: Optional[np.ndarray] = None) -> List[np.ndarray]:
    order = np.arange(n) if order is None else order
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def split_by_rows(items: Sequence, index: np.ndarray) -> Tuple:
    return tuple(items[i] for i in index)
