"""
Hyperparameter models for the three predictors and their training loops.
"""
import json
from typing import Any, Dict, List, Mapping, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, model_validator

from shared.artifact_manager import sha256_json

C = TypeVar("C", bound=BaseModel)


class _Digestible(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form"""
        return sha256_json({"type": type(self).__name__, **self.model_dump(mode="json")})


class GnnConfig(_Digestible):
    """Hybrid graph-attention model"""
    hidden: int = Field(default=256, gt=0, description="Node state width D")
    gat_layers: int = Field(default=4, ge=0)
    heads: int = Field(default=8, gt=0)
    dropout: float = Field(default=0.15, ge=0.0, lt=1.0)
    leaky_slope: float = Field(default=0.2, ge=0.0)
    mixture_hidden: int = Field(default=256, gt=0)
    head_hidden: Tuple[int, int] = (512, 128)
    drfp_width: int = Field(default=2048, gt=0)
    use_drfp: bool = True
    use_reactant_product_graphs: bool = True
    use_mixture_encoder: bool = True
    use_attention: bool = True

    @model_validator(mode='after')
    def validate_heads(self):
        """Heads concatenate back to the node width"""
        if self.hidden % self.heads:
            raise ValueError(f"hidden {self.hidden} must be divisible by heads {self.heads}")
        return self

    @property
    def fusion_width(self) -> int:
        pooled = 2 * self.hidden
        width = 2 * pooled + 3
        if self.use_reactant_product_graphs:
            width += 3 * pooled
        if self.use_mixture_encoder:
            width += self.mixture_hidden
        if self.use_drfp:
            width += self.drfp_width
        return width


class DeepModelConfig(_Digestible):
    """Transformer + SwiGLU network over baseline feature vectors"""
    hidden: int = Field(default=384, gt=0)
    tokens: int = Field(default=8, gt=0, description="Sequence length the hidden vector is reshaped into")
    heads: int = Field(default=8, gt=0)
    swiglu_blocks: int = Field(default=4, ge=0)
    dropout: float = Field(default=0.15, ge=0.0, lt=1.0)
    head_hidden: int = Field(default=192, gt=0)
    head_dropout: float = Field(default=0.075, ge=0.0, lt=1.0)
    plain_mlp: bool = False

    @model_validator(mode='after')
    def validate_tokens(self):
        """Tokens tile the hidden vector and heads tile each token"""
        if self.hidden % self.tokens:
            raise ValueError(f"hidden {self.hidden} must be divisible by tokens {self.tokens}")
        if (self.hidden // self.tokens) % self.heads:
            raise ValueError(f"token width {self.hidden // self.tokens} must be divisible by heads {self.heads}")
        return self

    @property
    def token_width(self) -> int:
        return self.hidden // self.tokens


class GbdtConfig(_Digestible):
    """Histogram gradient-boosted trees, one ensemble per target"""
    iterations: int = Field(default=1200, ge=0)
    learning_rate: float = Field(default=0.025, gt=0.0)
    max_depth: int = Field(default=10, gt=0)
    min_samples_leaf: int = Field(default=5, gt=0)
    l2: float = Field(default=0.05, ge=0.0)
    max_leaf_nodes: int = Field(default=100, ge=2)
    max_bins: int = Field(default=256, ge=2, le=256)


class TrainConfig(_Digestible):
    """Optimization loop settings for the neural predictors"""
    lr: float = Field(default=3e-4, gt=0.0)
    weight_decay: float = Field(default=1e-5, ge=0.0)
    batch_size: int = Field(default=128, gt=0)
    max_epochs: int = Field(default=400, ge=1)
    clip_norm: float = Field(default=1.0, gt=0.0)
    early_stopping_patience: Optional[int] = Field(default=None, ge=1)
    plateau_scheduler: bool = False
    plateau_factor: float = Field(default=0.7, gt=0.0, lt=1.0)
    plateau_patience: int = Field(default=30, ge=1)
    dtype: str = "float32"
    target_mask: Optional[List[int]] = Field(default=None, description="Output columns contributing to the loss")

    @model_validator(mode='after')
    def validate_dtype(self):
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        return self


def default_train_config(kind: str, dtype: str = "float32") -> TrainConfig:
    """Training defaults per model family"""
    if kind in ("deepmodel", "mlp"):
        return TrainConfig(lr=7e-4, early_stopping_patience=50, dtype=dtype)
    return TrainConfig(lr=3e-4, plateau_scheduler=True, dtype=dtype)


def parse_override(text: str) -> Tuple[str, str, Any]:
    """``section.key=value`` -> (section, key, value); values are read as JSON when possible"""
    if "=" not in text:
        raise ValueError(f"override {text!r} must look like section.key=value")
    path, raw = text.split("=", 1)
    if "." not in path:
        raise ValueError(f"override {text!r} must name a section, e.g. gnn.hidden=128")
    section, key = path.strip().split(".", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section, key, value


def merge_overrides(config: C, overrides: Optional[Mapping[str, Any]]) -> C:
    """Return a re-validated copy of ``config`` with non-None overrides applied"""
    if not overrides:
        return config
    updates = {k: v for k, v in overrides.items() if v is not None}
    merged: Dict[str, Any] = {**config.model_dump(), **updates}
    cls: Type[C] = type(config)
    return cls.model_validate(merged)
