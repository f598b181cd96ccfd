"""
Configuration settings for the solvent-yield benchmark toolkit.
Loads settings from environment variables with defaults.
"""
from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field, model_validator


class Settings(BaseSettings):
    """Application settings loaded from environment"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Reproducibility
    SEED: int = Field(default=0, ge=0, description="Global seed recorded in every artifact")
    TOOL_VERSION: str = Field(default="1.0.0", description="Version string embedded in artifacts")

    # Output
    OUTPUT_DIR: str = Field(default="artifacts", description="Base directory for reports and checkpoints")
    LOG_LEVEL: str = Field(default="INFO", description="Logging level for console output")
    SHOW_PROGRESS: bool = Field(default=False, description="Show tqdm progress bars during training")

    # Execution
    JOBS: int = Field(default=1, ge=1, description="Number of folds evaluated concurrently")

    # Numeric precision
    TRAIN_DTYPE: str = Field(default="float32", description="Floating dtype used for training")
    CHECK_DTYPE: str = Field(default="float64", description="Floating dtype used for gradient checks")

    # Differential reaction fingerprints
    DRFP_RADIUS: int = Field(default=3, ge=0, description="Circular substructure radius")
    DRFP_WIDTH: int = Field(default=2048, gt=0, description="Fingerprint width in bits (power of two)")

    # Reaction under study: allyl catechol ether and its two rearrangement products
    REACTION_SM_SMILES: str = Field(
        default="C=CCOc1ccccc1O",
        description="Starting material SMILES"
    )
    REACTION_P2_SMILES: str = Field(
        default="C=CCc1cccc(O)c1O",
        description="Product 2 SMILES"
    )
    REACTION_P3_SMILES: str = Field(
        default="C=CCc1ccc(O)c(O)c1",
        description="Product 3 SMILES"
    )

    # Descriptor tables
    SPANGE_TABLE_PATH: Optional[str] = Field(default=None, description="Spange descriptor CSV")
    ACS_PCA_TABLE_PATH: Optional[str] = Field(default=None, description="ACS PCA descriptor CSV")

    # Evaluation
    VALIDATION_FRACTION: float = Field(
        default=0.15,
        description="Fraction of training rows carved out for early stopping"
    )
    ENSEMBLE_EPSILON: float = Field(default=1e-6, gt=0, description="Inverse-variance regularizer")
    VARIANCE_MODE: str = Field(
        default="per_row",
        description="Prediction variance for ensembling (per_row, per_fold)"
    )

    @model_validator(mode='after')
    def validate_consistency(self):
        """Reject settings that would produce unusable runs"""
        width = self.DRFP_WIDTH
        if width & (width - 1):
            raise ValueError(f"DRFP_WIDTH must be a power of two, got {width}")

        if not 0.0 < self.VALIDATION_FRACTION < 1.0:
            raise ValueError("VALIDATION_FRACTION must lie strictly between 0 and 1")

        for name in ("TRAIN_DTYPE", "CHECK_DTYPE"):
            if getattr(self, name) not in ("float32", "float64"):
                raise ValueError(f"{name} must be float32 or float64")

        if self.VARIANCE_MODE not in ("per_row", "per_fold"):
            raise ValueError("VARIANCE_MODE must be per_row or per_fold")

        return self


# Singleton instance
settings = Settings()
