"""
Half-Space Profiles
Operator rescaling and the exact one-dimensional solutions c (x.e)_+^beta
"""
from typing import Sequence

import numpy as np
from loguru import logger

from core.errors import OperatorValidityError, ParameterError
from core.grid import Grid, ScalarField, SymMatrix
from core.params import beta_of
from operators.operator_spec import OperatorSpec, evaluate

UNIT_TOL = 1e-12


def rescale_operator(spec: OperatorSpec, r: float, beta: float) -> OperatorSpec:
    """
    F_r(M) = r^(2-beta) F(r^(beta-2) M).

    Every implemented kind is positively homogeneous, so F_r = F for all r > 0
    and the operator is returned unchanged.
    """
    if not np.isfinite(r) or r <= 0:
        raise ParameterError(f"rescaling radius r={r} must be > 0")
    if not np.isfinite(beta):
        raise ParameterError(f"beta={beta} must be finite")
    logger.debug(f"rescale_operator: r={r:g}, beta={beta:g} -> F_r = F ({spec.label})")
    return spec


def _unit(e: Sequence[float]) -> np.ndarray:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    norm = float(np.linalg.norm(e))
    if abs(norm - 1.0) > UNIT_TOL:
        raise ParameterError(f"direction {e.tolist()} has norm {norm}, expected 1")
    return e


def halfspace_coefficient(spec: OperatorSpec, gamma: float, e: Sequence[float]) -> float:
    """
    Coefficient c of the half-space solution c (x.e)_+^beta.

    Determined by c^(2-gamma) beta (beta-1) F(e (x) e) = 1.
    """
    beta = beta_of(gamma)
    e = _unit(e)
    f_ee = evaluate(spec, SymMatrix.outer(e))
    if not f_ee > 0:
        raise OperatorValidityError(f"F(e(x)e)={f_ee} <= 0 for e={e.tolist()}")
    return float((beta * (beta - 1.0) * f_ee) ** (-1.0 / (2.0 - gamma)))


def halfspace_values(
    spec: OperatorSpec, gamma: float, e: Sequence[float], points: np.ndarray
) -> np.ndarray:
    """c (x.e)_+^beta at an (N, dim) array of points."""
    e = _unit(e)
    c = halfspace_coefficient(spec, gamma, e)
    s = np.maximum(np.asarray(points, dtype=float) @ e, 0.0)
    return c * np.power(s, beta_of(gamma))


def halfspace_profile(spec: OperatorSpec, gamma: float, e: Sequence[float], grid: Grid) -> ScalarField:
    """Exact solution c_{gamma,e} (x.e)_+^beta sampled on a grid."""
    e = _unit(e)
    if e.size != grid.dim:
        raise ParameterError(f"direction of length {e.size} on a {grid.dim}D grid")
    return ScalarField(grid, halfspace_values(spec, gamma, e, grid.points).reshape(grid.shape))
