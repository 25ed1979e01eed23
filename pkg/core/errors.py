"""
Lab Errors
Exception hierarchy shared by every package of the lab
"""
from typing import Any, Optional


class AltPhillipsError(Exception):
    """Base class for all lab errors."""


class ParameterError(AltPhillipsError, ValueError):
    """A scalar parameter is outside its admissible range."""


class ShapeError(AltPhillipsError, ValueError):
    """Array or matrix dimensions do not match."""


class GridIndexError(AltPhillipsError, IndexError):
    """Grid index is outside the region an operation may read."""


class GeometryError(AltPhillipsError, ValueError):
    """A ball or box does not fit inside the computational domain."""


class OperatorValidityError(AltPhillipsError, ValueError):
    """Operator violates ellipticity, normalization, or symmetry."""


class DecompositionError(AltPhillipsError, ValueError):
    """Coefficient matrix cannot be split over the stencil directions."""

    def __init__(self, message: str, matrix: Optional[Any] = None):
        super().__init__(message)
        self.matrix = matrix


class NumericalError(AltPhillipsError, ArithmeticError):
    """Linear solve broke down; carries the policy in force at the time."""

    def __init__(self, message: str, policy_snapshot: Optional[Any] = None):
        super().__init__(message)
        self.policy_snapshot = policy_snapshot


class InsufficientResolutionError(AltPhillipsError, ValueError):
    """Too few usable radii or grid points for a measurement."""


class ConfigError(AltPhillipsError, ValueError):
    """Experiment config failed schema validation."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
