"""
Pydantic models for the solvent-yield benchmark toolkit.
Defines the records, plans and results shared across packages.
"""
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Subset(str, Enum):
    """Dataset subsets of the benchmark distribution"""
    MIXTURES = "mixtures"
    SINGLE_SOLVENTS = "single_solvents"
    ETHER_TRANSFER = "ether_transfer"


class Protocol(str, Enum):
    """Cross-validation protocols"""
    LOSO = "loso"
    LORO = "loro"
    RANDOM = "random"


class Method(str, Enum):
    """Predictors the harness can evaluate"""
    GBDT = "gbdt"
    DEEPMODEL = "deepmodel"
    MLP = "mlp"
    GNN = "gnn"
    ENSEMBLE = "ensemble"
    GNN_SINGLE_TASK = "gnn_single_task"
    GNN_NO_DRFP = "gnn_no_drfp"
    GNN_NO_REACTANT_PRODUCT_GRAPHS = "gnn_no_reactant_product_graphs"
    GNN_NO_MIXTURE_ENCODER = "gnn_no_mixture_encoder"
    GNN_NO_ATTENTION = "gnn_no_attention"


class FoldStatus(str, Enum):
    """Fold execution status"""
    PENDING = "pending"
    COMPLETED = "completed"
    FAILED = "failed"


class SolventRef(BaseModel):
    """A solvent by name with its structure"""
    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    smiles: Optional[str] = None


class ReactionRecord(BaseModel):
    """One experimental row of the flow-chemistry benchmark"""
    model_config = ConfigDict(frozen=True)

    row_id: int = Field(..., ge=0)
    solvent_a: SolventRef
    solvent_b: Optional[SolventRef] = None
    pct_b: float = 0.0
    temperature_c: float
    residence_time_s: float
    yield_sm: float
    yield_p2: float
    yield_p3: Optional[float] = None
    ramp_id: str
    drfp_hex: Optional[str] = None

    @field_validator('yield_sm', 'yield_p2', 'yield_p3', 'temperature_c', 'residence_time_s', 'pct_b')
    @classmethod
    def validate_finite(cls, v):
        """Reject NaN and infinite measurements"""
        if v is not None and not math.isfinite(v):
            raise ValueError("value must be finite")
        return v

    @property
    def is_single_solvent(self) -> bool:
        return self.solvent_b is None

    @property
    def solvent_names(self) -> Tuple[str, ...]:
        if self.solvent_b is None:
            return (self.solvent_a.name,)
        return (self.solvent_a.name, self.solvent_b.name)

    def involves(self, solvent: str) -> bool:
        """True when the solvent is used as A or B"""
        return solvent in self.solvent_names

    def targets(self) -> List[float]:
        """Yields as fractions, SM first; absent third target becomes NaN"""
        p3 = self.yield_p3 if self.yield_p3 is not None else float("nan")
        return [self.yield_sm, self.yield_p2, p3]


class ReactionSmiles(BaseModel):
    """Fixed molecules of the reaction under study"""
    model_config = ConfigDict(frozen=True)

    starting_material: str
    product_2: str
    product_3: str


class Dataset(BaseModel):
    """Typed benchmark dataset"""
    records: List[ReactionRecord]
    subset: Subset
    reaction: ReactionSmiles
    source_path: Optional[str] = None
    source_digest: Optional[str] = None
    yield_scale: float = Field(default=1.0, gt=0, description="Divisor applied to raw yields")
    yield_scale_reason: str = "fractions"
    drfp_source: str = Field(default="computed", description="computed or dataset")

    @property
    def roster(self) -> List[str]:
        """Sorted distinct solvent names used as A or B"""
        names = set()
        for record in self.records:
            names.update(record.solvent_names)
        return sorted(names)

    @property
    def n_targets(self) -> int:
        return 2 if self.subset == Subset.ETHER_TRANSFER else 3

    def by_id(self) -> Dict[int, ReactionRecord]:
        return {record.row_id: record for record in self.records}

    def select(self, row_ids: List[int]) -> List[ReactionRecord]:
        lookup = self.by_id()
        return [lookup[i] for i in row_ids]


class ValidationIssue(BaseModel):
    """One problem found in a dataset"""
    kind: str = Field(..., description="range, duplicate, unknown_solvent")
    row_id: Optional[int] = None
    column: Optional[str] = None
    message: str


class ValidationReport(BaseModel):
    """Report-only dataset validation result"""
    n_records: int = Field(..., ge=0)
    range_violations: List[ValidationIssue] = Field(default_factory=list)
    duplicate_rows: List[ValidationIssue] = Field(default_factory=list)
    unknown_solvents: List[ValidationIssue] = Field(default_factory=list)

    @property
    def violations(self) -> List[ValidationIssue]:
        return self.range_violations + self.duplicate_rows + self.unknown_solvents

    @property
    def is_clean(self) -> bool:
        return not self.violations


class Fold(BaseModel):
    """One train/test partition"""
    fold_id: int = Field(..., ge=0)
    group: str
    train_ids: List[int]
    test_ids: List[int] = Field(..., min_length=1)
    val_ids: List[int] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_disjoint(self):
        """Train, validation and test rows never overlap"""
        train = set(self.train_ids)
        if train & set(self.test_ids):
            raise ValueError(f"fold {self.fold_id}: train and test overlap")
        if train & set(self.val_ids) or set(self.val_ids) & set(self.test_ids):
            raise ValueError(f"fold {self.fold_id}: validation rows overlap train or test")
        return self


class SplitPlan(BaseModel):
    """Folds generated under one protocol"""
    protocol: Protocol
    seed: int
    folds: List[Fold] = Field(..., min_length=1)


class FoldResult(BaseModel):
    """Outcome of one method on one fold"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    fold_id: int
    group: str
    method: str
    status: FoldStatus = FoldStatus.PENDING
    n_test: int = Field(default=0, ge=0)
    mse_per_target: List[Optional[float]] = Field(default_factory=list)
    mse_pooled: Optional[float] = Field(default=None, ge=0.0)
    variance_mean: Optional[float] = Field(default=None, ge=0.0)
    clamped: bool = False
    config_digest: Optional[str] = None
    error: Optional[str] = None
    test_ids: List[int] = Field(default_factory=list, exclude=True)
    predictions: Optional[Any] = Field(default=None, exclude=True)
    variances: Optional[Any] = Field(default=None, exclude=True)
    wall_time: float = Field(default=0.0, ge=0.0, exclude=True)

    @field_validator('error')
    @classmethod
    def validate_failed_has_error(cls, v, info):
        """A failed fold must carry its error message"""
        if info.data.get('status') == FoldStatus.FAILED and v is None:
            raise ValueError("Failed fold must have error message")
        return v


class MethodSummary(BaseModel):
    """Mean and spread of one method across folds"""
    method: str
    label: str
    n_folds: int = Field(..., ge=0)
    n_failed: int = Field(default=0, ge=0)
    mse_mean: Optional[float] = None
    mse_std: Optional[float] = None
    mse_per_target_mean: List[Optional[float]] = Field(default_factory=list)
    config_digest: Optional[str] = None


class BenchmarkReport(BaseModel):
    """Aggregated benchmark output"""
    protocol: Protocol
    seed: int
    n_folds: int = Field(..., ge=1)
    methods: List[MethodSummary]
    folds: List[FoldResult]
    per_solvent: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    residual_bias: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    metadata: Dict[str, Any] = Field(default_factory=dict)
    provenance: Dict[str, Any] = Field(default_factory=dict)
    references: Dict[str, Any] = Field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return all(f.status == FoldStatus.COMPLETED for f in self.folds)

    def summary_for(self, method: str) -> Optional[MethodSummary]:
        return next((m for m in self.methods if m.method == method), None)


class RunConfig(BaseModel):
    """Everything needed to reproduce one command invocation"""
    data: Optional[str] = None
    mapping: Optional[str] = None
    subset: Subset = Subset.MIXTURES
    spange: Optional[str] = None
    acs_pca: Optional[str] = None
    protocol: Protocol = Protocol.LOSO
    methods: List[str] = Field(default_factory=lambda: [Method.GBDT.value])
    seed: int = Field(default=0, ge=0)
    out: str = "artifacts"
    jobs: int = Field(default=1, ge=1)
    official: bool = False
    overrides: Dict[str, Any] = Field(default_factory=dict)

    @field_validator('methods')
    @classmethod
    def validate_methods(cls, v):
        """Only known methods may be requested"""
        known = {m.value for m in Method}
        unknown = [m for m in v if m not in known]
        if unknown:
            raise ValueError(f"unknown methods: {', '.join(unknown)}")
        return v
