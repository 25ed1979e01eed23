"""
Contact-Set Density
Fraction of contact nodes in dyadic balls around a free-boundary point
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from core.errors import InsufficientResolutionError, ParameterError
from core.grid import Grid, ScalarField, restrict_to_ball
from freeboundary.extraction import FreeBoundarySet

DEFAULT_DELTA_REG = 0.1
DEFAULT_R0_FRACTION = 0.25  # R0 = inradius / 4
MIN_RADIUS_CELLS = 8
MIN_RADII = 3


@dataclass
class DensityProfile:
    """Contact density per radius, largest radius first."""
    x0: List[float]
    radii: List[float]
    densities: List[float]
    r0: float
    delta_reg: float

    @property
    def smallest_density(self) -> float:
        return self.densities[-1]

    @property
    def regular(self) -> bool:
        return self.smallest_density >= self.delta_reg

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"r": self.radii, "density": self.densities})

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "radii": self.radii,
            "densities": self.densities,
            "r0": self.r0,
            "delta_reg": self.delta_reg,
            "regular": self.regular,
        }


def dyadic_radii(grid: Grid, r0: float, min_cells: int = MIN_RADIUS_CELLS) -> List[float]:
    """r0, r0/2, ... down to min_cells * h."""
    floor = min_cells * grid.h_max
    radii = []
    r = r0
    while r >= floor * (1.0 - 1e-12):
        radii.append(r)
        r /= 2.0
    return radii


def density_profile(
    u: ScalarField,
    fb: FreeBoundarySet,
    x0: Sequence[float],
    r0: Optional[float] = None,
    r0_fraction: float = DEFAULT_R0_FRACTION,
    delta_reg: float = DEFAULT_DELTA_REG,
) -> DensityProfile:
    """
    |{u <= tau} cap B_r(x0)| / |B_r(x0)| by node count over dyadic radii.

    Raises:
        ParameterError: x0 is not a free-boundary point
        InsufficientResolutionError: fewer than 3 radii of at least 8h
    """
    grid = fb.grid
    if u.grid != grid:
        raise ParameterError(f"field grid {u.grid.shape} differs from free-boundary grid {grid.shape}")
    if fb.find(x0) is None:
        raise ParameterError(f"x0={list(x0)} is not a free-boundary point")
    if r0 is None:
        r0 = r0_fraction * grid.inradius
    radii = dyadic_radii(grid, r0)
    if len(radii) < MIN_RADII:
        raise InsufficientResolutionError(
            f"only {len(radii)} dyadic radii in [{MIN_RADIUS_CELLS}h, {r0:g}] (h={grid.h_max:g}), need {MIN_RADII}"
        )

    contact = fb.contact.ravel()
    densities = []
    for r in radii:
        idx = restrict_to_ball(grid, x0, r)
        densities.append(float(contact[idx].mean()) if idx.size else 0.0)
    profile = DensityProfile(
        x0=[float(v) for v in x0], radii=radii, densities=densities, r0=r0, delta_reg=delta_reg
    )
    logger.debug(f"Density at {profile.x0}: {np.round(densities, 3).tolist()} -> regular={profile.regular}")
    return profile
