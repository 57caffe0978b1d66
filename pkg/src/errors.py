"""Exception hierarchy shared by every layer of the toolkit."""
from typing import Dict, Optional

import numpy as np


class ReddpcError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ReddpcError, ValueError):
    """Problem specification, override or CLI argument is invalid."""


class DimensionMismatchError(ReddpcError):
    """Arrays handed to a builder, solver or law do not fit together."""


class DataError(ReddpcError):
    """Recorded trajectory cannot be used."""


class TrajectoryFormatError(DataError):
    """A trajectory file row could not be parsed."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class TrajectoryDimensionError(DataError):
    """A trajectory row has the wrong number of columns."""


class EmptyTrajectoryError(DataError):
    """A trajectory file contains no samples."""


class InsufficientDataError(DataError):
    """Trajectory is too short for the requested horizon."""


class PersistencyError(DataError):
    """Input data are not persistently exciting of the required order."""

    def __init__(self, message: str, achieved_rank: int, required_rank: int):
        super().__init__(message)
        self.achieved_rank = achieved_rank
        self.required_rank = required_rank


class RankDeficientError(ReddpcError, np.linalg.LinAlgError):
    """A matrix that must have full row rank does not."""


class SynthesisError(ReddpcError):
    """Explicit law synthesis failed."""


class EmptyLawError(SynthesisError):
    """No active set yields a nonempty region: the QP is infeasible for every parameter."""


class NoRegionError(ReddpcError):
    """Parameter lies outside every stored region of an explicit law."""


class SolverError(ReddpcError):
    """QP oracle did not return an optimal solution."""

    def __init__(self, message: str, status: str):
        super().__init__(message)
        self.status = status


class CrossValidationError(ReddpcError):
    """Every regularization candidate failed during cross-validation."""

    def __init__(self, message: str, diagnostics: Dict[float, str]):
        super().__init__(message)
        self.diagnostics = diagnostics


class LawFileError(ReddpcError):
    """Law file is unreadable or structurally invalid."""


class FingerprintError(LawFileError):
    """Law file content does not match its recorded digest or source QP."""


class LawVersionError(LawFileError):
    """Law file was written in an unsupported format version."""


class VerificationError(ReddpcError):
    """An equivalence or invariant check exceeded its bound on noiseless data."""


EXIT_CODES = (
    (ConfigError, 2),
    (DimensionMismatchError, 2),
    (DataError, 3),
    (LawFileError, 5),
    (VerificationError, 5),
    (ReddpcError, 4),
)


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code of its family."""
    for error_type, code in EXIT_CODES:
        if isinstance(error, error_type):
            return code
    return 1
