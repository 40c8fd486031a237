"""Probabilistic aircraft conflict detection under ensemble wind uncertainty.

The pipeline decomposes an ensemble wind forecast into a few uncorrelated
random coordinates (a multi-process Karhunen-Loeve expansion), builds
data-driven orthonormal polynomials and Gaussian quadrature for them
(arbitrary polynomial chaos), flies a deterministic planner at the
quadrature nodes, and turns the resulting polynomial surrogates into
separation envelopes and conflict probabilities.
"""
from .errors import (ConfigError, DataError, EnsembleFormatError, MissingStageError, NumericalError,
                     OutOfDomainError, PlannerError, UndefinedConditionalError, WindConflictError)

__all__ = [
    "ConfigError", "DataError", "EnsembleFormatError", "MissingStageError", "NumericalError",
    "OutOfDomainError", "PlannerError", "UndefinedConditionalError", "WindConflictError",
]
