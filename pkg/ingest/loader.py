"""
Benchmark CSV ingestion.

Raw files are renamed to the canonical column set through an optional column
mapping, parsed row by row into ReactionRecords and checked against the
published row/solvent counts when the file is declared official.
"""
import json
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from chem.drfp import Fingerprint
from chem.smiles import parse_smiles
from chem.solvents import RESOURCES_DIR, normalize_name
from shared.artifact_manager import sha256_file
from shared.config import settings
from shared.errors import MissingColumn, RosterMismatch, RowParseError, SmilesError
from shared.log import get_logger
from shared.models import Dataset, ReactionRecord, ReactionSmiles, SolventRef, Subset

logger = get_logger("DatasetLoader")

CANONICAL_COLUMNS = (
    "solvent_a_name", "solvent_a_smiles", "solvent_b_name", "solvent_b_smiles", "pct_b",
    "temperature_c", "residence_time_s", "yield_sm", "yield_p2", "yield_p3", "ramp_id",
)
REQUIRED_COLUMNS = ("solvent_a_name", "temperature_c", "residence_time_s", "yield_sm", "yield_p2")
YIELD_COLUMNS = ("yield_sm", "yield_p2", "yield_p3")
DRFP_HEX_COLUMN = "drfp_hex"
DRFP_BIT_PREFIX = "drfp_"

# Header names of the public distribution
PUBLIC_MAPPING_PATH = RESOURCES_DIR / "kaggle_column_mapping.json"

# (rows, distinct solvents) of the published files
OFFICIAL_COUNTS: Dict[Subset, Tuple[int, int]] = {
    Subset.MIXTURES: (1227, 24),
    Subset.SINGLE_SOLVENTS: (656, 24),
    Subset.ETHER_TRANSFER: (283, 11),
}

PERCENT_THRESHOLD = 1.5

ColumnMapping = Mapping[str, str]


def load_column_mapping(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a JSON object mapping raw header -> canonical column name.

    Raises ValueError for targets outside the canonical set.
    """
    with open(path, encoding="utf-8") as handle:
        mapping = json.load(handle)
    if not isinstance(mapping, dict):
        raise ValueError(f"{path}: column mapping must be a JSON object")
    allowed = set(CANONICAL_COLUMNS) | {DRFP_HEX_COLUMN}
    unknown = sorted(v for v in mapping.values() if v not in allowed)
    if unknown:
        raise ValueError(f"{path}: unknown canonical columns {unknown}")
    return {str(k): str(v) for k, v in mapping.items()}


def detect_yield_scale(values: np.ndarray) -> Tuple[float, str]:
    """
    Divisor that turns raw yields into fractions.

    A maximum above 1.5 means the file stores percents.
    """
    finite = np.asarray(values, dtype=np.float64)
    finite = finite[np.isfinite(finite)]
    if finite.size and finite.max() > PERCENT_THRESHOLD:
        return 100.0, f"percent (max raw yield {finite.max():g} > {PERCENT_THRESHOLD})"
    return 1.0, "fractions"


def derive_ramp_id(solvent_a: str, solvent_b: Optional[str], pct_b: float) -> str:
    """One ramp is one mixture scanned across temperature and residence time"""
    b = normalize_name(solvent_b) if solvent_b else "-"
    return f"{normalize_name(solvent_a)}|{b}|{float(pct_b):g}"


def _text(value) -> Optional[str]:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return None
    text = str(value).strip()
    return text or None


def _number(frame_row: int, column: str, value, required: bool = True) -> Optional[float]:
    if _text(value) is None:
        if required:
            raise RowParseError(frame_row, column, "value is missing")
        return None
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise RowParseError(frame_row, column, f"cannot parse {value!r} as a number")
    if not np.isfinite(number):
        raise RowParseError(frame_row, column, f"non-finite value {value!r}")
    return number


def _drfp_columns(columns: Sequence[str]) -> List[str]:
    bits = [c for c in columns if c.startswith(DRFP_BIT_PREFIX) and c[len(DRFP_BIT_PREFIX):].isdigit()]
    return sorted(bits, key=lambda c: int(c[len(DRFP_BIT_PREFIX):]))


def _read_frame(path: Path, mapping: Optional[ColumnMapping]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise MissingColumn(REQUIRED_COLUMNS[0], str(path))
    frame.columns = [str(c).strip() for c in frame.columns]
    if mapping:
        frame = frame.rename(columns=dict(mapping))
    return frame


def _single_solvent(name_a, smiles_a, name_b, smiles_b, pct: float):
    """Pure-solvent rows stored as a 0% or 100% mixture collapse onto one solvent"""
    if name_b is None:
        return name_a, smiles_a
    if pct >= 100.0:
        return name_b, smiles_b
    return name_a, smiles_a


def load_dataset(
    path: Union[str, Path],
    subset: Union[Subset, str],
    mapping: Optional[Union[ColumnMapping, str, Path]] = None,
    official: bool = False,
    reaction: Optional[ReactionSmiles] = None,
) -> Dataset:
    """
    Load one benchmark CSV into a typed Dataset.

    Args:
        path: CSV file (UTF-8, header row)
        subset: mixtures, single_solvents or ether_transfer
        mapping: Raw header -> canonical name, as a dict or a JSON file path
        official: Enforce the published row and solvent counts
        reaction: Molecules of the studied reaction (default from settings)

    Returns:
        Dataset with yields as fractions

    Raises:
        MissingColumn: A required canonical column is absent
        RowParseError: A cell cannot be parsed (1-based data row)
        RosterMismatch: Official file with unexpected counts
    """
    path = Path(path)
    subset = Subset(subset)
    if isinstance(mapping, (str, Path)):
        mapping = load_column_mapping(mapping)
    frame = _read_frame(path, mapping)

    required = list(REQUIRED_COLUMNS)
    if subset != Subset.ETHER_TRANSFER:
        required.append("yield_p3")
    for column in required:
        if column not in frame.columns:
            raise MissingColumn(column, str(path))

    raw_yields = []
    for column in YIELD_COLUMNS:
        if column in frame.columns:
            raw_yields.append(pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=np.float64))
    scale, scale_reason = detect_yield_scale(np.concatenate(raw_yields) if raw_yields else np.zeros(0))

    has = set(frame.columns)
    bit_columns = _drfp_columns(frame.columns)
    drfp_source = "dataset" if DRFP_HEX_COLUMN in has or bit_columns else "computed"
    if bit_columns:
        width = len(bit_columns)
        if width & (width - 1):
            raise RowParseError(0, DRFP_BIT_PREFIX + "*", f"{width} fingerprint bit columns is not a power of two")

    records: List[ReactionRecord] = []
    for i, row in enumerate(frame.to_dict(orient="records")):
        n = i + 1
        name_a = _text(row.get("solvent_a_name"))
        if name_a is None:
            raise RowParseError(n, "solvent_a_name", "value is missing")
        smiles_a = _text(row.get("solvent_a_smiles"))
        name_b = _text(row.get("solvent_b_name"))
        smiles_b = _text(row.get("solvent_b_smiles"))
        pct = _number(n, "pct_b", row.get("pct_b"), required=False)
        pct = 0.0 if pct is None else pct

        if subset == Subset.SINGLE_SOLVENTS:
            name_a, smiles_a = _single_solvent(name_a, smiles_a, name_b, smiles_b, pct)
            name_b, smiles_b, pct = None, None, 0.0

        yields = {}
        for column in YIELD_COLUMNS:
            needed = column != "yield_p3" or subset != Subset.ETHER_TRANSFER
            value = _number(n, column, row.get(column), required=needed) if column in has else None
            yields[column] = None if value is None else value / scale
        if subset == Subset.ETHER_TRANSFER:
            yields["yield_p3"] = None

        ramp_id = _text(row.get("ramp_id")) or derive_ramp_id(name_a, name_b, pct)
        drfp_hex = _text(row.get(DRFP_HEX_COLUMN))
        if drfp_hex is None and bit_columns:
            bits = np.array([_number(n, c, row[c]) for c in bit_columns], dtype=np.uint8)
            drfp_hex = Fingerprint(bits, len(bit_columns)).to_hex()

        try:
            records.append(ReactionRecord(
                row_id=i,
                solvent_a=SolventRef(name=name_a, smiles=smiles_a),
                solvent_b=SolventRef(name=name_b, smiles=smiles_b) if name_b else None,
                pct_b=pct,
                temperature_c=_number(n, "temperature_c", row.get("temperature_c")),
                residence_time_s=_number(n, "residence_time_s", row.get("residence_time_s")),
                ramp_id=ramp_id,
                drfp_hex=drfp_hex,
                **yields,
            ))
        except ValueError as e:
            raise RowParseError(n, "record", str(e))

    dataset = Dataset(
        records=records,
        subset=subset,
        reaction=reaction or default_reaction(),
        source_path=str(path),
        source_digest=sha256_file(str(path)),
        yield_scale=scale,
        yield_scale_reason=scale_reason,
        drfp_source=drfp_source,
    )
    _check_counts(dataset, official)
    if official:
        check_solvent_structures(dataset)
    logger.info(
        f"Loaded {len(records)} {subset.value} rows, {len(dataset.roster)} solvents "
        f"(yields: {scale_reason}, drfp: {drfp_source})"
    )
    return dataset


def default_reaction() -> ReactionSmiles:
    return ReactionSmiles(
        starting_material=settings.REACTION_SM_SMILES,
        product_2=settings.REACTION_P2_SMILES,
        product_3=settings.REACTION_P3_SMILES,
    )


def _check_counts(dataset: Dataset, official: bool) -> None:
    rows, solvents = OFFICIAL_COUNTS[dataset.subset]
    found = (len(dataset.records), len(dataset.roster))
    if found == (rows, solvents):
        return
    message = (
        f"{dataset.subset.value}: expected {rows} rows / {solvents} solvents, "
        f"found {found[0]} rows / {found[1]} solvents"
    )
    if official:
        raise RosterMismatch(message)
    logger.warning(message)


def check_solvent_structures(dataset: Dataset) -> None:
    """Every SMILES given in the file must parse"""
    seen = set()
    for record in dataset.records:
        refs = [("solvent_a_smiles", record.solvent_a), ("solvent_b_smiles", record.solvent_b)]
        for column, ref in refs:
            if ref is None or not ref.smiles or ref.smiles in seen:
                continue
            try:
                parse_smiles(ref.smiles)
            except SmilesError as e:
                raise RowParseError(record.row_id + 1, column, e.message)
            seen.add(ref.smiles)


def dataset_frame(dataset: Dataset) -> pd.DataFrame:
    """Canonical-column table of a dataset (yields as fractions)"""
    rows = []
    for r in dataset.records:
        rows.append({
            "solvent_a_name": r.solvent_a.name,
            "solvent_a_smiles": r.solvent_a.smiles or "",
            "solvent_b_name": r.solvent_b.name if r.solvent_b else "",
            "solvent_b_smiles": (r.solvent_b.smiles or "") if r.solvent_b else "",
            "pct_b": r.pct_b,
            "temperature_c": r.temperature_c,
            "residence_time_s": r.residence_time_s,
            "yield_sm": r.yield_sm,
            "yield_p2": r.yield_p2,
            "yield_p3": r.yield_p3 if r.yield_p3 is not None else "",
            "ramp_id": r.ramp_id,
        })
    return pd.DataFrame(rows, columns=list(CANONICAL_COLUMNS))
