"""
Reference roster of the 24 benchmark solvents (name, SMILES, class).
"""
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

RESOURCES_DIR = Path(__file__).resolve().parent.parent / "resources"
ROSTER_PATH = RESOURCES_DIR / "solvents.csv"
OFFICIAL_SOLVENT_COUNT = 24


def normalize_name(name: str) -> str:
    """Lowercase and trim a solvent name; internal whitespace runs collapse to one space"""
    return " ".join(str(name).strip().lower().split())


@lru_cache(maxsize=None)
def load_roster(path: Optional[str] = None) -> Dict[str, str]:
    """Normalized solvent name -> SMILES"""
    frame = pd.read_csv(path or ROSTER_PATH, dtype=str)
    return {normalize_name(n): s.strip() for n, s in zip(frame["name"], frame["smiles"])}


def reference_smiles(name: str) -> Optional[str]:
    return load_roster().get(normalize_name(name))
