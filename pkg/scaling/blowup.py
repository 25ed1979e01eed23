"""
Blow-Up Diagnostics
Distance of a rescaling to half-space profiles, convexity and directional monotonicity
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger

from core.grid import ScalarField, hessian_field, restrict_to_ball, sym_eigvals
from core.params import Params
from lab_config import LAB_CONFIG
from operators.halfspace import halfspace_coefficient
from operators.operator_spec import OperatorSpec
from scaling.rescaling import Rescaling, interpolate


def direction_lattice(dim: int, samples: int = LAB_CONFIG.ANGULAR_SAMPLES) -> np.ndarray:
    """Unit directions: {+1, -1} in 1D, ``samples`` equispaced angles in 2D."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    theta = 2.0 * np.pi * np.arange(samples) / samples
    return np.column_stack([np.cos(theta), np.sin(theta)])


SHIFT_SAMPLES = 17
SHIFT_REFINEMENTS = 3
DIRECTION_WINDOW = 8  # lattice neighbours kept when refining the shift


@dataclass
class ProfileFit:
    """Best half-space profile for a rescaling."""
    distance: float  # L-infinity over the source nodes in B_r(x0), rescaled units
    direction: List[float]
    coefficient: float  # c_{gamma,e} of the best direction
    r: float
    shift: float = 0.0  # offset of the profile's free boundary along e, rescaled units

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "distance": self.distance,
            "direction": self.direction,
            "coefficient": self.coefficient,
            "shift": self.shift,
        }


def shift_window(resc: Rescaling, tau: float, c_ref: float) -> float:
    """
    How far x0 may sit from the free boundary, in rescaled units.

    A contact node with u <= tau lies within (tau / c_ref)^(1/beta) of the
    half-space boundary, plus one cell for the node spacing.
    """
    reach = (tau / c_ref) ** (1.0 / resc.beta) if tau > 0 and c_ref > 0 else 0.0
    return (reach + resc.source.grid.h_max) / resc.r


def _sup_distances(pts, vals, dirs, coeffs, beta, s):
    proj = np.maximum(pts @ dirs.T - s, 0.0)  # (points, directions)
    return np.max(np.abs(coeffs[None, :] * np.power(proj, beta) - vals[:, None]), axis=0)


def profile_distance(
    resc: Rescaling,
    spec: OperatorSpec,
    params: Params,
    samples: int = LAB_CONFIG.ANGULAR_SAMPLES,
    shift: float = 0.0,
) -> ProfileFit:
    """
    min over e and |s| <= shift of max |u_r - c_e (x.e - s)_+^beta|.

    The maximum runs over the source nodes inside B_r(x0), taken in rescaled
    coordinates, so no interpolation error enters. The shift absorbs the
    sub-cell distance between x0 and the free boundary; shift=0 fits the
    profile through x0 itself. The shift is searched on a grid of 17 values,
    then refined three times around the best one.
    """
    src = resc.source
    x0 = np.asarray(resc.x0, dtype=float)
    idx = restrict_to_ball(src, x0, resc.r)
    pts = (src.grid.points[idx] - x0) / resc.r
    vals = src.flat[idx] / resc.r ** resc.beta
    dirs = direction_lattice(src.grid.dim, samples)
    coeffs = np.array([halfspace_coefficient(spec, params.gamma, e) for e in dirs])

    shifts = np.linspace(-shift, shift, SHIFT_SAMPLES) if shift > 0 else np.zeros(1)
    best = (np.inf, 0, 0.0)
    for s in shifts:
        dist = _sup_distances(pts, vals, dirs, coeffs, params.beta, s)
        k = int(np.argmin(dist))
        if dist[k] < best[0]:
            best = (float(dist[k]), k, float(s))

    half = shift / (SHIFT_SAMPLES - 1)
    for _ in range(SHIFT_REFINEMENTS if shift > 0 else 0):
        k0, s0 = best[1], best[2]
        ks = np.unique(np.arange(k0 - DIRECTION_WINDOW, k0 + DIRECTION_WINDOW + 1) % len(dirs))
        for s in np.clip(np.linspace(s0 - half, s0 + half, SHIFT_SAMPLES), -shift, shift):
            dist = _sup_distances(pts, vals, dirs[ks], coeffs[ks], params.beta, s)
            j = int(np.argmin(dist))
            if dist[j] < best[0]:
                best = (float(dist[j]), int(ks[j]), float(s))
        half /= (SHIFT_SAMPLES - 1) / 2.0

    distance, k, s = best
    fit = ProfileFit(
        distance=distance, direction=dirs[k].tolist(), coefficient=float(coeffs[k]), r=resc.r, shift=s
    )
    logger.debug(
        f"Profile distance at r={resc.r:g}: {fit.distance:.4e}, e={np.round(dirs[k], 4).tolist()}, shift={s:.3e}"
    )
    return fit


def convexity_margin(resc: Rescaling) -> float:
    """Smallest Hessian eigenvalue of the rescaling over interior reference nodes in B_1."""
    ref = resc.reference
    inner = (slice(1, -1),) * ref.dim
    eig = sym_eigvals(hessian_field(resc.target))[..., 0]
    radius = np.sqrt(sum(c[inner] ** 2 for c in ref.mesh))
    inside = radius <= 1.0 + 1e-12
    return float(eig[inside].min())


@dataclass
class MonotonicityResult:
    """min over admissible directions and x in B_{1/2} of the centred directional difference."""
    value: float
    axis: List[float]
    delta: float
    directions: int

    def to_dict(self) -> dict:
        return {"value": self.value, "axis": self.axis, "delta": self.delta, "directions": self.directions}


def monotonicity_cone(
    resc: Rescaling,
    delta: float,
    axis: Sequence[float],
    samples: Optional[int] = None,
) -> MonotonicityResult:
    """
    Directional monotonicity of the rescaling inside the cone e.axis >= delta.

    Differences use the reference spacing: (u(x + h e) - u(x - h e)) / 2h.
    """
    ref = resc.reference
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    dirs = direction_lattice(ref.dim, samples or LAB_CONFIG.ANGULAR_SAMPLES // 10)
    dirs = dirs[dirs @ axis >= delta - 1e-12]
    if dirs.size == 0:
        return MonotonicityResult(value=float("inf"), axis=axis.tolist(), delta=delta, directions=0)
    idx = restrict_to_ball(ref, np.zeros(ref.dim), 0.5)
    pts = ref.points[idx]
    h = ref.h_max
    worst = np.inf
    for e in dirs:
        diff = (interpolate(resc.target, pts + h * e) - interpolate(resc.target, pts - h * e)) / (2.0 * h)
        worst = min(worst, float(diff.min()))
    return MonotonicityResult(value=worst, axis=axis.tolist(), delta=delta, directions=int(len(dirs)))
