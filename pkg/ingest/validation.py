"""
Report-only dataset checks: physical ranges, duplicate rows and solvents
missing from the descriptor tables.
"""
from typing import Dict, List, Optional, Tuple

from chem.descriptors import DescriptorSet
from shared.log import get_logger
from shared.models import Dataset, ReactionRecord, ValidationIssue, ValidationReport

logger = get_logger("DatasetValidator")

TEMPERATURE_RANGE = (60.0, 120.0)
RESIDENCE_TIME_RANGE = (30.0, 300.0)
YIELD_RANGE = (0.0, 1.0)
PCT_RANGE = (0.0, 100.0)


def _range_issues(record: ReactionRecord) -> List[ValidationIssue]:
    checks = [
        ("temperature_c", record.temperature_c, TEMPERATURE_RANGE),
        ("residence_time_s", record.residence_time_s, RESIDENCE_TIME_RANGE),
        ("pct_b", record.pct_b, PCT_RANGE),
        ("yield_sm", record.yield_sm, YIELD_RANGE),
        ("yield_p2", record.yield_p2, YIELD_RANGE),
        ("yield_p3", record.yield_p3, YIELD_RANGE),
    ]
    issues = []
    for column, value, (low, high) in checks:
        if value is None or low <= value <= high:
            continue
        issues.append(ValidationIssue(
            kind="range", row_id=record.row_id, column=column,
            message=f"row {record.row_id}: {column}={value:g} outside [{low:g}, {high:g}]",
        ))
    return issues


def _row_key(record: ReactionRecord) -> Tuple:
    return (
        record.solvent_names, record.pct_b, record.temperature_c, record.residence_time_s,
        record.yield_sm, record.yield_p2, record.yield_p3,
    )


def validate_dataset(dataset: Dataset, tables: Optional[DescriptorSet] = None) -> ValidationReport:
    """
    Collect range violations, duplicates and unknown solvents without raising.

    Args:
        dataset: Loaded dataset
        tables: Descriptor tables to check solvent coverage against (skipped when None)

    Returns:
        ValidationReport; ``is_clean`` when nothing was found
    """
    report = ValidationReport(n_records=len(dataset.records))

    first_seen: Dict[Tuple, int] = {}
    for record in dataset.records:
        report.range_violations.extend(_range_issues(record))
        key = _row_key(record)
        if key in first_seen:
            report.duplicate_rows.append(ValidationIssue(
                kind="duplicate", row_id=record.row_id,
                message=f"row {record.row_id} duplicates row {first_seen[key]}",
            ))
        else:
            first_seen[key] = record.row_id

    if tables is not None:
        for table in tables.tables():
            for solvent in dataset.roster:
                if solvent not in table:
                    report.unknown_solvents.append(ValidationIssue(
                        kind="unknown_solvent", column=table.table_id,
                        message=f"solvent {solvent!r} missing from {table.table_id} table",
                    ))

    logger.info(
        f"{report.n_records} rows: {len(report.range_violations)} range, "
        f"{len(report.duplicate_rows)} duplicate, {len(report.unknown_solvents)} unknown-solvent issues"
    )
    return report
