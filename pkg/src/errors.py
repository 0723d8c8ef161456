"""Exception hierarchy shared by every analysis module.

Each error carries an ``exit_code`` and a human readable ``detail`` the same
way an ``HTTPException`` carries ``status_code`` and ``detail``; the CLI turns
them into process exit codes.
"""
from typing import Optional

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PRECONDITION = 3
EXIT_SUITE_FAILED = 1


class AnalysisError(Exception):
    """Base class for failures raised while building or analysing a scenario."""

    exit_code = EXIT_PRECONDITION

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# Input validation (exit code 2)

class ValidationFailure(AnalysisError):
    exit_code = EXIT_VALIDATION


class ShapeMismatchError(ValidationFailure):
    pass


class ComplexValidationError(ValidationFailure):
    pass


class ScenarioError(ValidationFailure):
    pass


class EmptyRegionError(ValidationFailure):
    pass


class ExpressionError(ValidationFailure):
    """Syntax or evaluation error inside a scenario expression."""

    def __init__(self, detail: str, offset: Optional[int] = None):
        if offset is not None:
            detail = f"{detail} (at byte {offset})"
        super().__init__(detail)
        self.offset = offset


# Violated analysis hypotheses (exit code 3)

class PreconditionFailure(AnalysisError):
    exit_code = EXIT_PRECONDITION


class NotTorsionError(PreconditionFailure):
    pass


class NotInjectiveError(PreconditionFailure):
    pass


class InsufficientDataError(PreconditionFailure):
    pass


class BranchOrderError(PreconditionFailure):
    pass


class DiscreteSpectrumError(PreconditionFailure):
    pass


class MultipleDivisorPointsError(PreconditionFailure):
    pass


class CapacityMismatchError(PreconditionFailure):
    """Local capacity of a germ disagrees with its height beyond fit tolerance."""
