"""
Free Boundary Extraction
Contact set {u <= tau} and the grid points of its boundary
"""
import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from core.errors import ParameterError
from core.grid import Grid, ScalarField
from core.params import Params
from operators.halfspace import halfspace_coefficient
from operators.operator_spec import OperatorSpec

DEFAULT_KAPPA_TAU = 1.0


class TauScaling(Enum):
    """Unit of the contact threshold."""
    GRID = "grid"  # tau = kappa h^beta
    PROFILE = "profile"  # tau = kappa c_ref h^beta, the half-space profile one cell from its boundary


class PointClass(Enum):
    REGULAR = "regular"
    SINGULAR_CANDIDATE = "singular_candidate"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class BoundaryPoint:
    index: Tuple[int, ...]
    coordinate: Tuple[float, ...]
    normal: Optional[Tuple[float, ...]] = None
    tag: PointClass = PointClass.UNCLASSIFIED
    density_smallest_r: Optional[float] = None


@dataclass(frozen=True)
class FreeBoundarySet:
    """
    Discrete free boundary.

    ``points`` are interior nodes with u <= tau having an axis neighbour
    with u > tau, in lexicographic index order.
    """
    grid: Grid
    tau: float
    kappa_tau: float
    c_ref: float
    contact: np.ndarray  # bool, grid.shape
    points: Tuple[BoundaryPoint, ...] = field(default=())

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0

    @property
    def coordinates(self) -> np.ndarray:
        """(N, dim) boundary point coordinates."""
        if self.is_empty:
            return np.zeros((0, self.grid.dim))
        return np.array([p.coordinate for p in self.points])

    def find(self, x0: Sequence[float], tol: Optional[float] = None) -> Optional[int]:
        """Position of the boundary point at x0, or None."""
        if self.is_empty:
            return None
        tol = 1e-9 * self.grid.h_max if tol is None else tol
        d = np.linalg.norm(self.coordinates - np.asarray(x0, dtype=float), axis=1)
        k = int(np.argmin(d))
        return k if d[k] <= tol else None

    def with_points(self, points: Sequence[BoundaryPoint]) -> "FreeBoundarySet":
        return dataclasses.replace(self, points=tuple(points))

    def counts(self) -> dict:
        out = {c.value: 0 for c in PointClass}
        for p in self.points:
            out[p.tag.value] += 1
        return out


def threshold(
    params: Params,
    spec: OperatorSpec,
    grid: Grid,
    kappa_tau: float = DEFAULT_KAPPA_TAU,
    scaling: TauScaling = TauScaling.GRID,
) -> Tuple[float, float]:
    """
    (tau, c_ref) with tau = kappa_tau * h^beta.

    PROFILE scaling multiplies by c_ref, the half-space coefficient along e1.
    Under GRID scaling the extracted boundary of a half-space profile sits
    c_ref^(-1/beta) cells inside {u > 0}.
    """
    if not kappa_tau > 0:
        raise ParameterError(f"kappa_tau={kappa_tau} must be > 0")
    scaling = TauScaling(scaling)
    e1 = np.zeros(grid.dim)
    e1[0] = 1.0
    c_ref = halfspace_coefficient(spec, params.gamma, e1)
    unit = c_ref if scaling is TauScaling.PROFILE else 1.0
    return kappa_tau * unit * grid.h_max ** params.beta, c_ref


def extract(
    u: ScalarField,
    params: Params,
    spec: OperatorSpec,
    kappa_tau: float = DEFAULT_KAPPA_TAU,
    scaling: TauScaling = TauScaling.GRID,
) -> FreeBoundarySet:
    """Contact set and free-boundary points of u; an empty set is a valid result."""
    grid = u.grid
    tau, c_ref = threshold(params, spec, grid, kappa_tau, scaling)
    contact = u.values <= tau
    positive = ~contact

    near_positive = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        fwd = [slice(None)] * grid.dim
        bwd = [slice(None)] * grid.dim
        fwd[axis] = slice(1, None)
        bwd[axis] = slice(None, -1)
        near_positive[tuple(bwd)] |= positive[tuple(fwd)]
        near_positive[tuple(fwd)] |= positive[tuple(bwd)]

    on_boundary = contact & near_positive & grid.interior_mask
    idx = np.argwhere(on_boundary)  # lexicographic
    points = tuple(
        BoundaryPoint(index=tuple(int(i) for i in k), coordinate=tuple(grid.coordinate(tuple(k)).tolist()))
        for k in idx
    )
    contact.flags.writeable = False
    fb = FreeBoundarySet(grid=grid, tau=tau, kappa_tau=kappa_tau, c_ref=c_ref, contact=contact, points=points)
    if fb.is_empty:
        logger.info(f"Free boundary empty (tau={tau:.3e}, contact nodes {int(contact.sum())})")
    else:
        logger.info(f"Extracted {len(points)} free-boundary points (tau={tau:.3e})")
    return fb


def to_frame(fb: FreeBoundarySet) -> pd.DataFrame:
    """Boundary points as a table: coordinates, normal, class, density at the smallest radius."""
    axes = ["x", "y"][: fb.grid.dim]
    normal_cols = ["nx", "ny"][: fb.grid.dim]
    rows: List[dict] = []
    for p in fb.points:
        row = dict(zip(axes, p.coordinate))
        normal = p.normal if p.normal is not None else (np.nan,) * fb.grid.dim
        row.update(zip(normal_cols, normal))
        row["class"] = p.tag.value
        row["density_smallest_r"] = np.nan if p.density_smallest_r is None else p.density_smallest_r
        rows.append(row)
    return pd.DataFrame(rows, columns=axes + normal_cols + ["class", "density_smallest_r"])
