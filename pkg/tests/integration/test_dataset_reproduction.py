"""
Checks against the public benchmark files. Skipped unless CATECHOL_DATA_DIR
points at a directory holding single_solvents.csv and mixtures.csv (plus
optional mapping.json, spange.csv and acs_pca.csv). Without a mapping.json
the bundled public header mapping is used.
"""
import os
from pathlib import Path

import pytest

from chem.descriptors import ACS_PCA, SPANGE, DescriptorSet, load_descriptor_table
from cli.main import build_context
from ingest.loader import OFFICIAL_COUNTS, PUBLIC_MAPPING_PATH, load_dataset
from orchestrator.orchestrator import BenchmarkOrchestrator, ablation_suite
from orchestrator.reports import ABLATION_METHODS
from shared.models import Protocol, Subset

DATA_DIR = os.environ.get("CATECHOL_DATA_DIR")

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(not DATA_DIR, reason="CATECHOL_DATA_DIR not set"),
]


def optional(name):
    path = Path(DATA_DIR) / name
    return str(path) if path.is_file() else None


def load(subset: Subset):
    path = optional(f"{subset.value}.csv")
    if path is None:
        pytest.skip(f"{subset.value}.csv not in {DATA_DIR}")
    mapping = optional("mapping.json") or str(PUBLIC_MAPPING_PATH)
    dataset = load_dataset(path, subset, mapping, official=True)
    spange, acs = optional("spange.csv"), optional("acs_pca.csv")
    tables = DescriptorSet(
        spange=load_descriptor_table(spange, SPANGE) if spange else None,
        acs_pca=load_descriptor_table(acs, ACS_PCA) if acs else None,
    )
    return dataset, build_context(dataset, tables)


class TestOfficialFiles:
    """Published row and solvent counts"""

    @pytest.mark.parametrize("subset", [Subset.SINGLE_SOLVENTS, Subset.MIXTURES])
    def test_counts(self, subset):
        dataset, _ = load(subset)
        assert (len(dataset.records), len(dataset.roster)) == OFFICIAL_COUNTS[subset]


class TestReproduction:
    """Orderings and magnitude bands on the real data"""

    @pytest.mark.asyncio
    async def test_gbdt_loso_band(self):
        dataset, context = load(Subset.SINGLE_SOLVENTS)
        report = await BenchmarkOrchestrator(dataset, context, ["gbdt"]).run(Protocol.LOSO, seed=0)
        assert 0.08 <= report.summary_for("gbdt").mse_mean <= 0.13

    @pytest.mark.asyncio
    @pytest.mark.parametrize("protocol", [Protocol.LOSO, Protocol.LORO])
    async def test_gnn_well_below_gbdt(self, protocol):
        dataset, context = load(Subset.MIXTURES)
        report = await BenchmarkOrchestrator(dataset, context, ["gbdt", "gnn"]).run(protocol, seed=0)
        gbdt, gnn = report.summary_for("gbdt").mse_mean, report.summary_for("gnn").mse_mean
        assert gnn * 5 <= gbdt, f"gnn {gnn:.4f} vs gbdt {gbdt:.4f}"

    @pytest.mark.asyncio
    async def test_every_ablation_is_worse(self):
        dataset, context = load(Subset.SINGLE_SOLVENTS)
        report = await ablation_suite(dataset, context, Protocol.LOSO, seed=0)
        full = report.summary_for("gnn").mse_mean
        for method in ABLATION_METHODS[1:]:
            assert report.summary_for(method).mse_mean > full, method
