"""
Tabular solvent descriptors: table loading, linear mixing, PCA reduction
and assembly of the fixed-layout baseline feature vector.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from chem.drfp import Fingerprint
from chem.solvents import normalize_name
from shared.errors import DegenerateInput, PctOutOfRange, UnknownSolvent, WidthMismatch
from shared.log import get_logger
from shared.models import ReactionRecord

logger = get_logger("Descriptors")

SPANGE = "spange"
ACS_PCA = "acs_pca"
TABLE_IDS = (SPANGE, ACS_PCA)


@dataclass(frozen=True)
class DescriptorTable:
    """Solvent name -> fixed-width descriptor vector"""

    table_id: str
    names: Tuple[str, ...]
    columns: Tuple[str, ...]
    values: np.ndarray
    _index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.values.shape != (len(self.names), len(self.columns)):
            raise WidthMismatch(len(self.columns), self.values.shape[-1], f"{self.table_id} table")
        index = {}
        for i, name in enumerate(self.names):
            if name in index:
                raise ValueError(f"duplicate solvent {name!r} in {self.table_id} table")
            index[name] = i
        object.__setattr__(self, "_index", index)

    @property
    def width(self) -> int:
        return len(self.columns)

    def __contains__(self, name: str) -> bool:
        return normalize_name(name) in self._index

    def vector(self, name: str) -> np.ndarray:
        key = normalize_name(name)
        if key not in self._index:
            raise UnknownSolvent(name, self.table_id)
        return self.values[self._index[key]]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.columns))
        frame.insert(0, "solvent", list(self.names))
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, table_id: str) -> "DescriptorTable":
        """First column holds solvent names, remaining columns are numeric descriptors"""
        names = tuple(normalize_name(n) for n in frame.iloc[:, 0])
        numeric = frame.iloc[:, 1:].apply(pd.to_numeric, errors="raise")
        return cls(table_id, names, tuple(str(c) for c in numeric.columns), numeric.to_numpy(dtype=np.float64))


def load_descriptor_table(path: str, table_id: str) -> DescriptorTable:
    """Load a descriptor CSV (header row, first column = solvent name)."""
    if table_id not in TABLE_IDS:
        raise ValueError(f"unknown descriptor table {table_id!r}; expected one of {TABLE_IDS}")
    table = DescriptorTable.from_frame(pd.read_csv(path), table_id)
    logger.info(f"Loaded {table_id} table: {len(table.names)} solvents x {table.width} descriptors")
    return table


@dataclass(frozen=True)
class DescriptorSet:
    """The descriptor tables available to a run; either may be absent"""

    spange: Optional[DescriptorTable] = None
    acs_pca: Optional[DescriptorTable] = None

    @property
    def n_spange(self) -> int:
        return self.spange.width if self.spange else 0

    @property
    def n_acs(self) -> int:
        return self.acs_pca.width if self.acs_pca else 0

    def tables(self) -> Tuple[DescriptorTable, ...]:
        return tuple(t for t in (self.spange, self.acs_pca) if t is not None)


def mix_descriptors(f_a: np.ndarray, f_b: np.ndarray, pct_b: float) -> np.ndarray:
    """(1 - pct_b/100) * f_a + (pct_b/100) * f_b"""
    f_a = np.asarray(f_a, dtype=np.float64)
    f_b = np.asarray(f_b, dtype=np.float64)
    if f_a.shape != f_b.shape:
        raise WidthMismatch(f_a.size, f_b.size, "descriptor")
    if not 0.0 <= pct_b <= 100.0:
        raise PctOutOfRange(pct_b)
    if pct_b == 0.0:
        return f_a.copy()
    if pct_b == 100.0:
        return f_b.copy()
    w = pct_b / 100.0
    return (1.0 - w) * f_a + w * f_b


# --- PCA ---------------------------------------------------------------

@dataclass(frozen=True)
class PCABasis:
    mean: np.ndarray
    components: np.ndarray          # (k, n_features), orthonormal rows
    explained_variance: np.ndarray  # (k,)
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        return np.asarray(scores, dtype=np.float64) @ self.components + self.mean

    def explained_variance_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance


def pca_fit(matrix: np.ndarray, k: int) -> PCABasis:
    """
    Principal components via SVD of the centred matrix.

    Components are sorted by descending explained variance; each is signed
    so that its largest-magnitude loading is positive.
    """
    x = np.asarray(matrix, dtype=np.float64)
    n, f = x.shape
    if not 1 <= k <= min(n, f):
        raise ValueError(f"k must lie in [1, {min(n, f)}], got {k}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    variances = singular ** 2 / max(n - 1, 1)
    total = float(variances.sum())
    if total <= 1e-300:
        raise DegenerateInput("input has zero variance in every direction")
    components = vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PCABasis(mean, components, variances[:k], total)


def pca_table(table: DescriptorTable, k: int, table_id: str = ACS_PCA) -> Tuple[DescriptorTable, PCABasis]:
    """Reduce a raw descriptor table to k principal-component scores"""
    basis = pca_fit(table.values, k)
    scores = basis.transform(table.values)
    columns = tuple(f"pc{i + 1}" for i in range(k))
    return DescriptorTable(table_id, table.names, columns, scores), basis


# --- standardization ------------------------------------------------------

class Standardizer:
    """Per-column z-scoring with statistics from the training rows only"""

    def __init__(self):
        self.mean: Optional[np.ndarray] = None
        self.scale: Optional[np.ndarray] = None

    def fit(self, matrix: np.ndarray) -> "Standardizer":
        x = np.asarray(matrix, dtype=np.float64)
        self.mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.scale = np.where(std > 0, std, 1.0)
        return self

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        if self.mean is None:
            raise RuntimeError("Standardizer.transform called before fit")
        x = np.asarray(matrix, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise WidthMismatch(self.mean.shape[0], x.shape[-1], "standardizer input")
        return (x - self.mean) / self.scale

    def fit_transform(self, matrix: np.ndarray) -> np.ndarray:
        return self.fit(matrix).transform(matrix)

    def state(self) -> Dict[str, np.ndarray]:
        return {"mean": self.mean, "scale": self.scale}

    @classmethod
    def from_state(cls, state: Mapping[str, np.ndarray]) -> "Standardizer":
        obj = cls()
        obj.mean = np.asarray(state["mean"], dtype=np.float64)
        obj.scale = np.asarray(state["scale"], dtype=np.float64)
        return obj


# --- baseline features ----------------------------------------------------

FingerprintSource = Union[None, Fingerprint, Mapping[int, Fingerprint]]


def _mixed_block(record: ReactionRecord, table: Optional[DescriptorTable]) -> np.ndarray:
    if table is None:
        return np.zeros(0)
    f_a = table.vector(record.solvent_a.name)
    if record.solvent_b is None:
        return f_a.copy()
    return mix_descriptors(f_a, table.vector(record.solvent_b.name), record.pct_b)


def _fingerprint_for(record: ReactionRecord, fingerprints: FingerprintSource) -> Optional[Fingerprint]:
    if fingerprints is None or isinstance(fingerprints, Fingerprint):
        return fingerprints
    return fingerprints[record.row_id]


def baseline_width(tables: DescriptorSet, drfp_width: int) -> int:
    return 2 + tables.n_spange + tables.n_acs + drfp_width


def assemble_baseline_features(
    record: ReactionRecord,
    tables: DescriptorSet,
    fp: Optional[Fingerprint] = None,
) -> np.ndarray:
    """
    Concatenate [tau, T, spange mix, acs mix, drfp bits] for one row.

    Returns:
        Vector of width 2 + n_spange + n_acs + fingerprint width
    """
    drfp = fp.as_float() if fp is not None else np.zeros(0)
    return np.concatenate([
        [record.residence_time_s, record.temperature_c],
        _mixed_block(record, tables.spange),
        _mixed_block(record, tables.acs_pca),
        drfp,
    ])


def baseline_matrix(
    records: Sequence[ReactionRecord],
    tables: DescriptorSet,
    fingerprints: FingerprintSource = None,
) -> np.ndarray:
    """Stack baseline feature vectors; ``fingerprints`` is one shared print or a row_id mapping"""
    rows = [assemble_baseline_features(r, tables, _fingerprint_for(r, fingerprints)) for r in records]
    if not rows:
        return np.zeros((0, 2 + tables.n_spange + tables.n_acs))
    return np.vstack(rows)
