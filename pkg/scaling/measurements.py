"""
Scaling Measurements
Growth exponent, Harnack ratio, free-boundary Lipschitz slope, Hessian bound and non-degeneracy
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy import stats
from scipy.spatial import distance

from core.errors import GeometryError, InsufficientResolutionError, ParameterError
from core.grid import ScalarField, hessian_field, restrict_to_ball, sym_eigvals
from core.params import Params
from freeboundary.extraction import FreeBoundarySet

MIN_GROWTH_RADII = 4
MIN_LIPSCHITZ_CELLS = 8.0


@dataclass
class GrowthFit:
    """Slope of log sup_{B_r} u against log r."""
    slope: float
    stderr: float
    intercept: float
    radii: List[float]
    sups: List[float]
    excluded: List[float] = field(default_factory=list)  # radii where sup u = 0

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "stderr": self.stderr,
            "intercept": self.intercept,
            "radii": self.radii,
            "sups": self.sups,
            "excluded_radii": self.excluded,
        }


def fit_growth_exponent(
    u: ScalarField, x0: Sequence[float], r0: float, min_radius: float
) -> GrowthFit:
    """
    Least-squares slope over the dyadic radii r0, r0/2, ... >= min_radius.

    Radii with sup u = 0 are excluded.

    Raises:
        InsufficientResolutionError: fewer than 4 usable radii
    """
    if not (r0 > 0 and min_radius > 0):
        raise ParameterError(f"radii must be positive (r0={r0}, min_radius={min_radius})")
    points = u.grid.points
    radii, sups, excluded = [], [], []
    r = r0
    while r >= min_radius * (1.0 - 1e-12):
        idx = restrict_to_ball(u, x0, r, points)
        s = float(u.flat[idx].max()) if idx.size else 0.0
        if s > 0:
            radii.append(r)
            sups.append(s)
        else:
            excluded.append(r)
        r /= 2.0
    if len(radii) < MIN_GROWTH_RADII:
        raise InsufficientResolutionError(
            f"{len(radii)} usable radii in [{min_radius:g}, {r0:g}], need {MIN_GROWTH_RADII}"
        )
    fit = stats.linregress(np.log(radii), np.log(sups))
    result = GrowthFit(
        slope=float(fit.slope),
        stderr=float(fit.stderr),
        intercept=float(fit.intercept),
        radii=radii,
        sups=sups,
        excluded=excluded,
    )
    logger.info(f"Growth exponent at {list(x0)}: {result.slope:.4f} +/- {result.stderr:.2e} over {len(radii)} radii")
    return result


def harnack_constant(u: ScalarField, center: Sequence[float], radius: float, params: Params) -> float:
    """
    sup_{B_{R/2}} u / (inf_{B_{R/2}} u + R^beta).

    Raises:
        GeometryError: B_R(center) leaves the domain
    """
    if not radius > 0:
        raise ParameterError(f"R={radius} must be > 0")
    if not u.grid.contains_ball(center, radius):
        raise GeometryError(f"B_{radius:g}({list(center)}) is not contained in the domain")
    idx = restrict_to_ball(u, center, radius / 2.0)
    vals = u.flat[idx]
    return float(vals.max() / (vals.min() + radius ** params.beta))


@dataclass
class LipschitzEstimate:
    """Largest slope of the free boundary written as a graph over a normal direction."""
    value: float
    x0: List[float]
    radius: float
    normal: List[float]
    points: int
    pairs: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "x0": self.x0,
            "radius": self.radius,
            "normal": self.normal,
            "points": self.points,
            "pairs": self.pairs,
        }


def lipschitz_constant(
    fb: FreeBoundarySet,
    x0: Sequence[float],
    normal: Sequence[float],
    radius: float,
    min_cells: float = MIN_LIPSCHITZ_CELLS,
) -> LipschitzEstimate:
    """
    max |t_i - t_j| / |s_i - s_j| over boundary points in B_radius(x0).

    t is the height along the normal and s the tangential part of x - x0.
    Pairs closer than min_cells * h tangentially are skipped, which bounds
    the staircase error of grid points by about 1 / min_cells. Fewer than
    two usable points give 0.
    """
    if not radius > 0:
        raise ParameterError(f"radius={radius} must be > 0")
    e = np.asarray(normal, dtype=float)
    norm = float(np.linalg.norm(e))
    if not norm > 0:
        raise ParameterError("normal must be nonzero")
    e = e / norm
    x0 = np.asarray(x0, dtype=float)
    rel = fb.coordinates - x0
    near = rel[np.linalg.norm(rel, axis=1) <= radius * (1.0 + 1e-12)]
    heights = near @ e
    tangential = near - np.outer(heights, e)

    value, pairs = 0.0, 0
    if len(near) >= 2:
        ds = distance.pdist(tangential)
        dt = distance.pdist(heights[:, None])
        usable = ds >= min_cells * fb.grid.h_max * (1.0 - 1e-12)
        pairs = int(usable.sum())
        if pairs:
            value = float(np.max(dt[usable] / ds[usable]))
    result = LipschitzEstimate(
        value=value, x0=x0.tolist(), radius=radius, normal=e.tolist(), points=len(near), pairs=pairs
    )
    logger.info(f"Free-boundary Lipschitz estimate at {result.x0}: {value:.4f} over {pairs} pairs (r={radius:g})")
    return result


@dataclass
class HessianRatio:
    """max |D^2_h u|_2 / u^(gamma-1) over interior nodes with u > tau."""
    value: float
    tau: float
    count: int
    location: Optional[List[float]] = None

    @property
    def empty(self) -> bool:
        return self.count == 0

    def to_dict(self) -> dict:
        return {"value": self.value, "tau": self.tau, "count": self.count, "empty": self.empty, "location": self.location}


def hessian_ratio_sup(u: ScalarField, params: Params, tau: float, margin: float = 0.0) -> HessianRatio:
    """
    Scale-invariant Hessian bound; an empty admissible set gives value 0.

    Nodes closer than ``margin`` to the domain boundary are skipped. The bound
    is an interior estimate and boundary data that vanishes slower than
    dist^beta makes the ratio blow up next to the boundary.
    """
    if margin < 0:
        raise ParameterError(f"margin={margin} must be >= 0")
    grid = u.grid
    inner = (slice(1, -1),) * grid.dim
    vals = u.values[inner]
    mask = vals > tau
    if margin > 0:
        lo, hi = np.asarray(grid.lo, dtype=float), np.asarray(grid.hi, dtype=float)
        for axis, coords in enumerate(grid.mesh):
            c = coords[inner]
            mask &= (c - lo[axis] >= margin * (1.0 - 1e-12)) & (hi[axis] - c >= margin * (1.0 - 1e-12))
    if not np.any(mask):
        return HessianRatio(value=0.0, tau=tau, count=0)
    norms = np.max(np.abs(sym_eigvals(hessian_field(u))), axis=-1)
    ratio = np.where(mask, norms / np.power(np.where(mask, vals, 1.0), params.gamma - 1.0), -np.inf)
    k = int(np.argmax(ratio))
    where = np.unravel_index(k, grid.interior_shape)
    return HessianRatio(
        value=float(ratio.ravel()[k]),
        tau=tau,
        count=int(mask.sum()),
        location=grid.coordinate(tuple(int(i) + 1 for i in where)).tolist(),
    )


@dataclass
class NondegeneracyResult:
    """min over r of sup over the shell r - h < |x - x0| <= r of u / r^beta."""
    value: float
    radii: List[float]
    ratios: List[float]

    def to_dict(self) -> dict:
        return {"value": self.value, "radii": self.radii, "ratios": self.ratios}


def nondegeneracy_constant(
    u: ScalarField, x0: Sequence[float], params: Params, radii: Sequence[float]
) -> NondegeneracyResult:
    if len(radii) == 0:
        raise ParameterError("nondegeneracy_constant needs at least one radius")
    grid = u.grid
    c = np.asarray(x0, dtype=float)
    dist = np.linalg.norm(grid.points - c, axis=1)
    ratios = []
    for r in radii:
        shell = (dist > r - grid.h_max) & (dist <= r * (1.0 + 1e-12))
        if not np.any(shell):
            raise InsufficientResolutionError(f"no grid nodes on the shell of radius {r:g}")
        ratios.append(float(u.flat[shell].max() / r ** params.beta))
    return NondegeneracyResult(value=min(ratios), radii=[float(r) for r in radii], ratios=ratios)
