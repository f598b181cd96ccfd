"""
Exception hierarchy shared by every package.
Each error keeps its context as attributes so callers can report it.
"""
from typing import Optional, Sequence, Tuple


class BenchError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


# --- SMILES parsing -------------------------------------------------------

class SmilesError(BenchError):
    """Raised when a SMILES string cannot be turned into a graph."""

    def __init__(self, message: str, offset: int, smiles: str = ""):
        self.offset = offset
        self.smiles = smiles
        super().__init__(f"{message} at offset {offset}" + (f" in {smiles!r}" if smiles else ""))


class UnbalancedParenthesis(SmilesError):
    pass


class UnclosedRingBond(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class ValenceOverflow(SmilesError):
    pass


class SmilesSyntaxError(SmilesError):
    pass


class NonRingAromatic(SmilesError):
    pass


# --- featurization / descriptors ----------------------------------------

class EmptyMolecule(BenchError):
    pass


class WidthMismatch(BenchError):
    def __init__(self, expected: int, actual: int, what: str = "vector"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} width mismatch: expected {expected}, got {actual}")


class PctOutOfRange(BenchError):
    def __init__(self, pct: float):
        self.pct = pct
        super().__init__(f"%B must lie in [0, 100], got {pct}")


class DegenerateInput(BenchError):
    pass


class UnknownSolvent(BenchError):
    def __init__(self, solvent: str, table: str):
        self.solvent = solvent
        self.table = table
        super().__init__(f"solvent {solvent!r} not found in descriptor table {table!r}")


# --- autodiff -------------------------------------------------------------

class ShapeMismatch(BenchError):
    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]]):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        rendered = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class NonScalarLoss(BenchError):
    pass


class MissingGradient(BenchError):
    def __init__(self, param: str):
        self.param = param
        super().__init__(f"parameter {param!r} has no gradient")


# --- models / training ---------------------------------------------------

class ConfigMismatch(BenchError):
    pass


class EmptyGraphInBatch(BenchError):
    pass


class InsufficientData(BenchError):
    def __init__(self, rows: int, required: int):
        self.rows = rows
        self.required = required
        super().__init__(f"need at least {required} rows to fit, got {rows}")


class NonFiniteLoss(BenchError):
    def __init__(self, epoch: int, value: float):
        self.epoch = epoch
        self.value = value
        super().__init__(f"non-finite loss {value} at epoch {epoch}")


class CheckpointMismatch(BenchError):
    pass


# --- data -------------------------------------------------------------

class MissingColumn(BenchError):
    def __init__(self, column: str, path: Optional[str] = None):
        self.column = column
        self.path = path
        super().__init__(f"missing column {column!r}" + (f" in {path}" if path else ""))


class RowParseError(BenchError):
    def __init__(self, row: int, column: str, reason: str):
        self.row = row
        self.column = column
        self.reason = reason
        super().__init__(f"row {row}, column {column!r}: {reason}")


class RosterMismatch(BenchError):
    pass


# --- evaluation -----------------------------------------------------------

class TooFewGroups(BenchError):
    def __init__(self, protocol: str, groups: int):
        self.protocol = protocol
        self.groups = groups
        super().__init__(f"protocol {protocol!r} needs at least 2 groups, found {groups}")
