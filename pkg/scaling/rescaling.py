"""
Rescalings
u_r(x) = u(r x + x0) / r^beta sampled on a fixed reference grid
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from loguru import logger
from scipy.interpolate import RegularGridInterpolator

from core.errors import GeometryError, ParameterError
from core.grid import Grid, ScalarField
from core.params import Params
from lab_config import LAB_CONFIG
from operators.halfspace import rescale_operator
from operators.operator_spec import OperatorSpec

MIN_RADIUS_CELLS = 4


@dataclass(frozen=True)
class Rescaling:
    """A rescaled solution and where it came from."""
    x0: tuple
    r: float
    beta: float
    source: ScalarField
    target: ScalarField  # on the reference grid
    operator: OperatorSpec
    interpolation_scale: float  # (h / r)^2, bilinear error in reference units

    @property
    def reference(self) -> Grid:
        return self.target.grid

    def to_dict(self) -> dict:
        return {
            "x0": list(self.x0),
            "r": self.r,
            "beta": self.beta,
            "n_ref": self.reference.n[0],
            "interpolation_scale": self.interpolation_scale,
        }


def reference_grid(dim: int, n_ref: int = LAB_CONFIG.REFERENCE_N, extent: float = LAB_CONFIG.REFERENCE_EXTENT) -> Grid:
    return Grid.uniform(dim, -extent, extent, n_ref)


def interpolate(u: ScalarField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of u; points are clipped into the grid box."""
    grid = u.grid
    pts = np.clip(np.asarray(points, dtype=float), np.asarray(grid.lo), np.asarray(grid.hi))
    interp = RegularGridInterpolator(grid.axes, u.values, method="linear", bounds_error=False, fill_value=None)
    return interp(pts)


def rescale(
    u: ScalarField,
    x0: Sequence[float],
    r: float,
    params: Params,
    spec: OperatorSpec,
    n_ref: int = LAB_CONFIG.REFERENCE_N,
) -> Rescaling:
    """
    Rescale u around x0 at radius r onto the reference grid over [-1.1, 1.1]^d.

    Raises:
        GeometryError: r < 4h or B_r(x0) leaves the domain
    """
    grid = u.grid
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != grid.dim:
        raise ParameterError(f"x0 of length {x0.size} on a {grid.dim}D grid")
    if not r >= MIN_RADIUS_CELLS * grid.h_max:
        raise GeometryError(f"r={r:g} below {MIN_RADIUS_CELLS}h = {MIN_RADIUS_CELLS * grid.h_max:g}")
    if not grid.contains_ball(x0, r):
        raise GeometryError(f"B_{r:g}({x0.tolist()}) is not contained in the domain")

    ref = reference_grid(grid.dim, n_ref)
    values = interpolate(u, x0 + r * ref.points) / r ** params.beta
    target = ScalarField(ref, values.reshape(ref.shape))
    resc = Rescaling(
        x0=tuple(x0.tolist()),
        r=float(r),
        beta=params.beta,
        source=u,
        target=target,
        operator=rescale_operator(spec, r, params.beta),
        interpolation_scale=(grid.h_max / r) ** 2,
    )
    logger.debug(f"Rescaled at {resc.x0}, r={r:g}: max target {target.max():.4e}")
    return resc
