"""
Free-Boundary Normals
Plane fits of the distorted solution u^(1/beta) and point classification
"""
import dataclasses
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy.spatial import cKDTree

from core.errors import InsufficientResolutionError
from core.grid import ScalarField, restrict_to_ball
from core.params import Params
from freeboundary.density import DEFAULT_DELTA_REG, DEFAULT_R0_FRACTION, density_profile
from freeboundary.extraction import FreeBoundarySet, PointClass

DEFAULT_NORMAL_WINDOW = 6  # fit radius in cells
MIN_FIT_POINTS = 5
GRADIENT_FLOOR = 1e-300


def normal_estimate(
    u: ScalarField,
    params: Params,
    x0: Sequence[float],
    fb: FreeBoundarySet,
    window: int = DEFAULT_NORMAL_WINDOW,
) -> Optional[np.ndarray]:
    """
    Unit normal at x0 pointing into {u > 0}.

    Fits v = a + g.(x - x0) over every node within window * h of x0, where
    v = u^(1/beta) on {u > tau} and v = 0 on the contact set. The radius is
    cut to the distance from x0 to the domain boundary so the ball stays
    symmetric. Returns None with fewer than 5 nodes of {u > tau} in the ball
    or a rank-deficient fit.
    """
    grid = u.grid
    x0 = np.asarray(x0, dtype=float)
    to_edge = float(np.min(np.minimum(x0 - np.asarray(grid.lo), np.asarray(grid.hi) - x0)))
    radius = min(window * grid.h_max, to_edge)
    idx = restrict_to_ball(grid, x0, radius)
    vals = u.flat[idx]
    positive = vals > fb.tau
    if int(positive.sum()) < MIN_FIT_POINTS:
        return None
    dx = grid.points[idx] - x0
    v = np.where(positive, np.power(np.where(positive, vals, 0.0), 1.0 / params.beta), 0.0)
    design = np.column_stack([np.ones(dx.shape[0]), dx])
    coef, _, rank, _ = np.linalg.lstsq(design, v, rcond=None)
    if rank < design.shape[1]:
        logger.debug(f"Rank-deficient normal fit at {x0.tolist()} (rank {rank})")
        return None
    g = coef[1:]
    norm = float(np.linalg.norm(g))
    if not norm > GRADIENT_FLOOR:
        return None
    return g / norm


def normal_oscillation(fb: FreeBoundarySet, rho: float) -> float:
    """Max angle between normals of boundary points closer than rho; 0 with fewer than two."""
    with_normal = [p for p in fb.points if p.normal is not None]
    if len(with_normal) < 2:
        return 0.0
    coords = np.array([p.coordinate for p in with_normal])
    normals = np.array([p.normal for p in with_normal])
    pairs = cKDTree(coords).query_pairs(r=rho, output_type="ndarray")
    if len(pairs) == 0:
        return 0.0
    cosines = np.einsum("ij,ij->i", normals[pairs[:, 0]], normals[pairs[:, 1]])
    return float(np.max(np.arccos(np.clip(cosines, -1.0, 1.0))))


def classify(
    u: ScalarField,
    params: Params,
    fb: FreeBoundarySet,
    delta_reg: float = DEFAULT_DELTA_REG,
    r0_fraction: float = DEFAULT_R0_FRACTION,
    window: int = DEFAULT_NORMAL_WINDOW,
) -> FreeBoundarySet:
    """Attach a normal, a density at the smallest radius and a class tag to every point."""
    points = []
    for p in fb.points:
        normal = normal_estimate(u, params, p.coordinate, fb, window)
        try:
            profile = density_profile(u, fb, p.coordinate, r0_fraction=r0_fraction, delta_reg=delta_reg)
            tag = PointClass.REGULAR if profile.regular else PointClass.SINGULAR_CANDIDATE
            density = profile.smallest_density
        except InsufficientResolutionError:
            tag = PointClass.UNCLASSIFIED
            density = None
        points.append(
            dataclasses.replace(
                p,
                normal=None if normal is None else tuple(float(c) for c in normal),
                tag=tag,
                density_smallest_r=density,
            )
        )
    out = fb.with_points(points)
    missing = sum(1 for p in points if p.normal is None)
    if missing:
        logger.warning(f"{missing} of {len(points)} free-boundary points have no normal")
    logger.info(f"Classified free boundary: {out.counts()}")
    return out
