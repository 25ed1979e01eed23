"""
Boundary Data
Catalog of nonnegative Dirichlet data
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from core.errors import ParameterError, ShapeError
from core.grid import Grid, ScalarField
from operators.halfspace import halfspace_values
from operators.operator_spec import OperatorSpec

# (coefficient, exponents per axis)
PolynomialTerm = Tuple[float, Tuple[int, ...]]


class BoundaryKind(Enum):
    CONSTANT = "constant"
    HALFSPACE = "halfspace"
    POLYNOMIAL = "polynomial"
    BUMP = "bump"


@dataclass(frozen=True)
class BoundaryData:
    """
    Dirichlet data descriptor.

    constant:   value
    halfspace:  c_{gamma,e} (x.e)_+^beta, the exact trace of the half-space solution
    polynomial: max(p(x), 0) with p = sum coef * prod x_i^k_i
    bump:       amplitude * prod_i sin^2(pi * frequency * t_i + phase),
                t_i = (x_i - lo_i) / (hi_i - lo_i)

    ``scale`` multiplies the data of every kind.
    """
    kind: BoundaryKind
    value: float = 0.0
    direction: Tuple[float, ...] = ()
    terms: Tuple[PolynomialTerm, ...] = ()
    amplitude: float = 0.01
    frequency: float = 1.0
    phase: float = math.pi / 2.0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BoundaryKind(self.kind))
        object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))
        object.__setattr__(
            self, "terms", tuple((float(c), tuple(int(k) for k in p)) for c, p in self.terms)
        )
        if not math.isfinite(self.scale) or self.scale < 0:
            raise ParameterError(f"boundary scale={self.scale} must be >= 0")
        if self.kind is BoundaryKind.CONSTANT and not self.value >= 0:
            raise ParameterError(f"constant boundary value={self.value} must be >= 0")
        if self.kind is BoundaryKind.HALFSPACE:
            norm = float(np.linalg.norm(self.direction)) if self.direction else 0.0
            if abs(norm - 1.0) > 1e-12:
                raise ParameterError(f"halfspace direction {list(self.direction)} must be a unit vector")
        if self.kind is BoundaryKind.BUMP and not self.amplitude >= 0:
            raise ParameterError(f"bump amplitude={self.amplitude} must be >= 0")

    @classmethod
    def constant(cls, value: float) -> "BoundaryData":
        return cls(BoundaryKind.CONSTANT, value=value)

    @classmethod
    def halfspace(cls, direction: Sequence[float]) -> "BoundaryData":
        return cls(BoundaryKind.HALFSPACE, direction=tuple(direction))

    @classmethod
    def polynomial(cls, terms: Sequence[PolynomialTerm]) -> "BoundaryData":
        return cls(BoundaryKind.POLYNOMIAL, terms=tuple(terms))

    @classmethod
    def bump(
        cls, amplitude: float = 0.01, frequency: float = 1.0, phase: float = math.pi / 2.0
    ) -> "BoundaryData":
        return cls(BoundaryKind.BUMP, amplitude=amplitude, frequency=frequency, phase=phase)

    def scaled(self, t: float) -> "BoundaryData":
        return BoundaryData(
            self.kind, self.value, self.direction, self.terms,
            self.amplitude, self.frequency, self.phase, self.scale * t,
        )

    def evaluate(
        self,
        grid: Grid,
        points: np.ndarray,
        gamma: Optional[float] = None,
        operator: Optional[OperatorSpec] = None,
    ) -> np.ndarray:
        """Data values at an (N, dim) array of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != grid.dim:
            raise ShapeError(f"points of shape {points.shape} on a {grid.dim}D grid")
        if self.kind is BoundaryKind.CONSTANT:
            vals = np.full(points.shape[0], self.value)
        elif self.kind is BoundaryKind.HALFSPACE:
            if gamma is None or operator is None:
                raise ParameterError("halfspace boundary data needs gamma and the operator")
            if len(self.direction) != grid.dim:
                raise ShapeError(f"halfspace direction of length {len(self.direction)} on a {grid.dim}D grid")
            vals = halfspace_values(operator, gamma, self.direction, points)
        elif self.kind is BoundaryKind.POLYNOMIAL:
            vals = np.zeros(points.shape[0])
            for coef, powers in self.terms:
                if len(powers) != grid.dim:
                    raise ShapeError(f"polynomial term {powers} on a {grid.dim}D grid")
                vals = vals + coef * np.prod(points ** np.asarray(powers), axis=1)
            vals = np.maximum(vals, 0.0)
        else:
            lo = np.asarray(grid.lo)
            width = np.asarray(grid.hi) - lo
            t = (points - lo) / width
            vals = self.amplitude * np.prod(
                np.sin(np.pi * self.frequency * t + self.phase) ** 2, axis=1
            )
        return self.scale * vals

    def field(
        self, grid: Grid, gamma: Optional[float] = None, operator: Optional[OperatorSpec] = None
    ) -> ScalarField:
        """
        Data on the boundary nodes, zero in the interior.

        Raises:
            ParameterError: if any boundary value is negative
        """
        full = np.zeros(grid.size)
        idx = grid.boundary_indices
        vals = self.evaluate(grid, grid.points[idx], gamma, operator)
        if np.any(vals < 0):
            raise ParameterError(f"{self.kind.value} boundary data has minimum {vals.min():g} < 0")
        full[idx] = vals
        return ScalarField(grid, full.reshape(grid.shape))

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind.value, "scale": self.scale}
        if self.kind is BoundaryKind.CONSTANT:
            out["value"] = self.value
        elif self.kind is BoundaryKind.HALFSPACE:
            out["direction"] = list(self.direction)
        elif self.kind is BoundaryKind.POLYNOMIAL:
            out["terms"] = [{"coef": c, "powers": list(p)} for c, p in self.terms]
        else:
            out.update(amplitude=self.amplitude, frequency=self.frequency, phase=self.phase)
        return out
