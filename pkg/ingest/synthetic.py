"""
Deterministic synthetic benchmark data for desk-scale runs and tests.

Yields follow a first-order conversion whose rate depends on the solvent
descriptors and temperature, so every predictor has real signal to learn.
"""
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from chem.descriptors import ACS_PCA, SPANGE, DescriptorSet, DescriptorTable
from chem.solvents import load_roster
from ingest.loader import dataset_frame, default_reaction, derive_ramp_id
from shared.artifact_manager import render_csv
from shared.models import Dataset, ReactionRecord, SolventRef, Subset

DEFAULT_TEMPERATURES = (60.0, 80.0, 100.0, 120.0)
DEFAULT_RESIDENCE_TIMES = (30.0, 90.0, 150.0, 225.0, 300.0)
DEFAULT_PCTS = (25.0, 50.0, 75.0)
N_SPANGE = 4
N_ACS = 3


@dataclass
class SyntheticData:
    dataset: Dataset
    tables: DescriptorSet


def synthetic_tables(names: Sequence[str], seed: int = 0) -> DescriptorSet:
    rng = np.random.default_rng([seed, 1])
    spange = DescriptorTable(SPANGE, tuple(names), tuple(f"s{i}" for i in range(N_SPANGE)),
                             rng.normal(size=(len(names), N_SPANGE)))
    acs = DescriptorTable(ACS_PCA, tuple(names), tuple(f"pc{i + 1}" for i in range(N_ACS)),
                          rng.normal(size=(len(names), N_ACS)))
    return DescriptorSet(spange, acs)


def _yields(descriptor: np.ndarray, temperature: float, residence_time: float,
            weights: np.ndarray, noise: float) -> Tuple[float, float, float]:
    rate = np.exp(0.4 * float(descriptor @ weights) + 1.2 * (temperature - 90.0) / 30.0)
    conversion = 1.0 - np.exp(-rate * residence_time / 150.0)
    selectivity = 1.0 / (1.0 + np.exp(-descriptor[0]))
    sm = 1.0 - conversion
    p2 = conversion * selectivity * 0.8
    p3 = conversion * (1.0 - selectivity) * 0.6
    return tuple(float(np.clip(v + noise, 0.0, 1.0)) for v in (sm, p2, p3))


def synthetic_dataset(
    n_solvents: int = 3,
    subset: Subset = Subset.SINGLE_SOLVENTS,
    temperatures: Sequence[float] = DEFAULT_TEMPERATURES,
    residence_times: Sequence[float] = DEFAULT_RESIDENCE_TIMES,
    pcts: Sequence[float] = DEFAULT_PCTS,
    noise: float = 0.01,
    seed: int = 0,
) -> SyntheticData:
    """
    Build a grid of (solvent system, T, tau) rows over the first ``n_solvents`` roster solvents.

    Single-solvent subsets use every solvent alone; mixture subsets use every
    unordered pair at each of ``pcts``. The defaults give 60 single-solvent rows.
    """
    roster = list(load_roster().items())
    if not 2 <= n_solvents <= len(roster):
        raise ValueError(f"n_solvents must lie in [2, {len(roster)}]")
    solvents = roster[:n_solvents]
    names = [name for name, _ in solvents]
    tables = synthetic_tables(names, seed)
    rng = np.random.default_rng([seed, 2])
    weights = rng.normal(size=N_SPANGE)

    systems: List[Tuple[int, Optional[int], float]] = []
    if subset == Subset.SINGLE_SOLVENTS:
        systems = [(i, None, 0.0) for i in range(n_solvents)]
    else:
        systems = [(i, j, pct) for i, j in combinations(range(n_solvents), 2) for pct in pcts]

    records = []
    for a, b, pct in systems:
        f = tables.spange.values[a]
        if b is not None:
            f = (1 - pct / 100.0) * f + (pct / 100.0) * tables.spange.values[b]
        for temperature in temperatures:
            for tau in residence_times:
                sm, p2, p3 = _yields(f, temperature, tau, weights, float(rng.normal(scale=noise)))
                name_a, smiles_a = solvents[a]
                ref_b = SolventRef(name=solvents[b][0], smiles=solvents[b][1]) if b is not None else None
                records.append(ReactionRecord(
                    row_id=len(records),
                    solvent_a=SolventRef(name=name_a, smiles=smiles_a),
                    solvent_b=ref_b,
                    pct_b=pct,
                    temperature_c=temperature,
                    residence_time_s=tau,
                    yield_sm=sm,
                    yield_p2=p2,
                    yield_p3=None if subset == Subset.ETHER_TRANSFER else p3,
                    ramp_id=derive_ramp_id(name_a, ref_b.name if ref_b else None, pct),
                ))

    dataset = Dataset(records=records, subset=subset, reaction=default_reaction(),
                      yield_scale_reason="fractions (synthetic)")
    return SyntheticData(dataset, tables)


def write_synthetic(data: SyntheticData, out_dir) -> Dict[str, str]:
    """
    Write the dataset and both descriptor tables as CSV files.

    Returns:
        Mapping data/spange/acs_pca -> written path
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "data": out / f"synthetic_{data.dataset.subset.value}.csv",
        "spange": out / "synthetic_spange.csv",
        "acs_pca": out / "synthetic_acs_pca.csv",
    }
    paths["data"].write_text(render_csv(dataset_frame(data.dataset)), encoding="utf-8")
    paths["spange"].write_text(render_csv(data.tables.spange.to_frame()), encoding="utf-8")
    paths["acs_pca"].write_text(render_csv(data.tables.acs_pca.to_frame()), encoding="utf-8")
    return {k: str(v) for k, v in paths.items()}
