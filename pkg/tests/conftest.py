"""
Shared fixtures: deterministic synthetic datasets and tiny model settings
so that end-to-end runs finish at desk scale.
"""
import json

import pytest

from ingest.synthetic import synthetic_dataset, write_synthetic
from predictors.inputs import FeatureContext
from shared.models import Subset

SMALL_DRFP_WIDTH = 64

# Small enough that every method trains on the 60-row fixture in seconds
TINY_OVERRIDES = {
    "gnn": {"hidden": 16, "heads": 2, "gat_layers": 1, "mixture_hidden": 8,
            "head_hidden": [16, 8], "drfp_width": SMALL_DRFP_WIDTH, "dropout": 0.0},
    "deepmodel": {"hidden": 16, "tokens": 2, "heads": 2, "swiglu_blocks": 1, "head_hidden": 8},
    "gbdt": {"iterations": 20, "learning_rate": 0.2, "max_depth": 3, "min_samples_leaf": 2,
             "max_leaf_nodes": 8},
    "train": {"max_epochs": 3, "batch_size": 32},
}


@pytest.fixture(scope="session")
def single_data():
    """60 single-solvent rows over three solvents, with descriptor tables"""
    return synthetic_dataset(3, Subset.SINGLE_SOLVENTS, seed=0)


@pytest.fixture(scope="session")
def mixture_data():
    """Three solvent pairs at three mixing ratios"""
    return synthetic_dataset(3, Subset.MIXTURES, seed=0)


@pytest.fixture(scope="session")
def context(single_data):
    return FeatureContext(single_data.dataset.reaction, single_data.tables, drfp_width=SMALL_DRFP_WIDTH)


@pytest.fixture(scope="session")
def mixture_context(mixture_data):
    return FeatureContext(mixture_data.dataset.reaction, mixture_data.tables, drfp_width=SMALL_DRFP_WIDTH)


@pytest.fixture
def tiny_overrides():
    return {section: dict(values) for section, values in TINY_OVERRIDES.items()}


@pytest.fixture
def synthetic_files(tmp_path, single_data):
    """Synthetic dataset and descriptor tables written as CSV"""
    return write_synthetic(single_data, tmp_path / "fixtures")


# The CLI pins the fingerprint width to its own context
CLI_OVERRIDES = {
    section: {k: v for k, v in values.items() if k != "drfp_width"}
    for section, values in TINY_OVERRIDES.items()
}


def set_flags(overrides=None):
    """``--set section.key=value`` flags for the command line"""
    flags = []
    for section, values in (overrides or CLI_OVERRIDES).items():
        for key, value in values.items():
            flags += ["--set", f"{section}.{key}={json.dumps(value)}"]
    return flags


@pytest.fixture
def cli_inputs(synthetic_files):
    """Data and descriptor flags for the synthetic single-solvent set"""
    return [
        "--data", synthetic_files["data"],
        "--subset", "single_solvents",
        "--spange", synthetic_files["spange"],
        "--acs-pca", synthetic_files["acs_pca"],
    ]


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"
