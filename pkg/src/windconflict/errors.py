"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps each family onto an exit code, so library code should raise the
most specific subclass that applies.
"""


class WindConflictError(Exception):
    """Base class for all package errors."""


class ConfigError(WindConflictError):
    """Invalid scenario configuration (CLI exit code 2)."""


class DataError(WindConflictError):
    """Malformed or inconsistent input data (CLI exit code 3)."""


class NumericalError(WindConflictError):
    """A numerical procedure could not produce a valid result (CLI exit code 4)."""


class EnsembleFormatError(DataError):
    def __init__(self, message, member=None, cell=None, row=None):
        super().__init__(message)
        self.member = member
        self.cell = cell
        self.row = row


class OutOfDomainError(DataError):
    """A point lies outside the wind grid's bounding box."""


class PlannerError(NumericalError):
    """Trajectory planning failed; ``partial`` holds whatever was integrated."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class UndefinedConditionalError(NumericalError):
    """The conditioning event has (numerically) zero probability."""


class MissingStageError(DataError):
    def __init__(self, stage, path):
        super().__init__(f"missing artifact {path}; run the '{stage}' stage first")
        self.stage = stage
        self.path = path
