"""Exception hierarchy shared by every stage of the pipeline."""


class UnitQAError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 1


class InvalidInputError(UnitQAError, ValueError):
    exit_code = 2


class InvalidStateError(UnitQAError, RuntimeError):
    exit_code = 3


class TrainingDivergedError(UnitQAError, FloatingPointError):
    """Raised when a loss or gradient stops being finite.

    ``diagnostics`` carries per-parameter gradient norms at the failing step.
    """

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ChecksumError(UnitQAError, IOError):
    exit_code = 5


class FormatVersionError(UnitQAError, IOError):
    exit_code = 5


class StageDependencyError(UnitQAError, FileNotFoundError):
    exit_code = 6
