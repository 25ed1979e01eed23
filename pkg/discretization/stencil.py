"""
Monotone Stencils
F(D^2 u) as a max over policies of nonnegative sums of directional second differences
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import scipy.sparse as sparse
from loguru import logger

from core.errors import DecompositionError, ShapeError
from core.grid import Grid, ScalarField, shifted
from operators.operator_spec import OperatorKind, OperatorSpec

NEGATIVE_WEIGHT_TOL = 1e-12

DIRECTIONS = {
    1: ((1,),),
    2: ((1, 0), (0, 1), (1, 1), (1, -1)),
}


@dataclass(frozen=True)
class StencilDirection:
    """One stencil direction v with its per-policy weights."""
    offset: Tuple[int, ...]
    weights: Tuple[float, ...]  # coefficient c_{alpha,v} of the unit-direction second derivative
    length_sq: float  # |v h|^2

    @property
    def unit(self) -> np.ndarray:
        return np.asarray(self.offset, dtype=float)


@dataclass(frozen=True)
class DiscreteOperator:
    """
    Monotone discretization of a Bellman-type operator on a grid.

    Row alpha of ``coefficients`` holds c_{alpha,v} >= 0 with
    sum_v c_{alpha,v} xi_v xi_v^T = A_alpha, xi_v = v h / |v h|, so each
    policy row is exact on quadratics.
    """
    grid: Grid
    spec: OperatorSpec
    label: str
    directions: Tuple[StencilDirection, ...]
    family: Tuple[np.ndarray, ...]
    coefficients: np.ndarray  # (policies, directions)

    @property
    def num_policies(self) -> int:
        return self.coefficients.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Weights on (u(x+vh) + u(x-vh) - 2u(x)), shape (policies, directions)."""
        lengths = np.array([d.length_sq for d in self.directions])
        return self.coefficients / lengths[None, :]


def direction_set(grid: Grid) -> List[Tuple[Tuple[int, ...], np.ndarray, float]]:
    """(offset, unit vector xi, |v h|^2) for the fixed symmetric direction set."""
    out = []
    for v in DIRECTIONS[grid.dim]:
        vec = np.asarray(v, dtype=float) * np.asarray(grid.h)
        length_sq = float(vec @ vec)
        out.append((v, vec / np.sqrt(length_sq), length_sq))
    return out


def decompose(a: np.ndarray, grid: Grid) -> np.ndarray:
    """
    Split a coefficient matrix over the stencil directions.

    Returns nonnegative c with sum_v c_v xi_v xi_v^T = a.

    Raises:
        DecompositionError: if an axis weight would be negative
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (grid.dim, grid.dim):
        raise ShapeError(f"coefficient matrix {a.shape} on a {grid.dim}D grid")
    if grid.dim == 1:
        c = np.array([a[0, 0]])
    else:
        h1, h2 = grid.h
        s = h1 * h1 + h2 * h2
        a12 = a[0, 1]
        c_pp = max(a12, 0.0) * s / (h1 * h2)
        c_pm = max(-a12, 0.0) * s / (h1 * h2)
        c1 = a[0, 0] - abs(a12) * h1 / h2
        c2 = a[1, 1] - abs(a12) * h2 / h1
        c = np.array([c1, c2, c_pp, c_pm])
    if np.any(c < -NEGATIVE_WEIGHT_TOL):
        raise DecompositionError(
            f"matrix {a.tolist()} is not representable on the stencil "
            f"(direction weights {c.tolist()})",
            matrix=a,
        )
    return np.maximum(c, 0.0)


def pucci_family(lam: float, dim: int) -> List[np.ndarray]:
    """
    Finite Pucci coefficient lattice.

    Diagonal matrices with entries in {1/lam, lam}, plus in 2D the two
    45-degree rotations carrying the extreme eigenvalue pairs.
    """
    lo, hi = 1.0 / lam, lam
    if dim == 1:
        mats = [np.array([[lo]]), np.array([[hi]])]
    else:
        mats = [np.diag([a1, a2]) for a1 in (lo, hi) for a2 in (lo, hi)]
        for l1, l2 in ((hi, lo), (lo, hi)):
            mats.append(0.5 * np.array([[l1 + l2, l1 - l2], [l1 - l2, l1 + l2]]))
    unique: List[np.ndarray] = []
    for m in mats:
        if not any(np.array_equal(m, u) for u in unique):
            unique.append(m)
    return unique


def build(spec: OperatorSpec, grid: Grid) -> DiscreteOperator:
    """Discretize an operator on a grid; every policy row is checked for monotonicity."""
    spec.check_dim(grid.dim)
    if spec.kind is OperatorKind.TRACE:
        family = [np.eye(grid.dim)]
        label = "trace"
    elif spec.kind is OperatorKind.PUCCI_PLUS:
        family = pucci_family(spec.lam, grid.dim)
        label = "pucci_plus_d4" if grid.dim == 2 else "pucci_plus"
    else:
        family = [np.asarray(a) for a in spec.family]
        label = "bellman"

    coeffs = np.stack([decompose(a, grid) for a in family])
    dirs = direction_set(grid)
    directions = tuple(
        StencilDirection(offset=v, weights=tuple(float(w) for w in coeffs[:, k]), length_sq=l2)
        for k, (v, _, l2) in enumerate(dirs)
    )
    coeffs.flags.writeable = False
    opd = DiscreteOperator(
        grid=grid,
        spec=spec,
        label=label,
        directions=directions,
        family=tuple(family),
        coefficients=coeffs,
    )
    logger.debug(
        f"Built {label} stencil on {grid.shape} grid: "
        f"{opd.num_policies} policies x {len(directions)} directions"
    )
    return opd


def second_differences(opd: DiscreteOperator, u: ScalarField) -> np.ndarray:
    """u(x+vh) + u(x-vh) - 2u(x) per direction, shape (directions,) + interior_shape."""
    if u.grid != opd.grid:
        raise ShapeError(f"field grid {u.grid.shape} differs from operator grid {opd.grid.shape}")
    v = u.values
    center = shifted(v, (0,) * opd.grid.dim)
    out = []
    for d in opd.directions:
        minus = tuple(-o for o in d.offset)
        out.append(shifted(v, d.offset) + shifted(v, minus) - 2.0 * center)
    return np.stack(out)


def policy_values(opd: DiscreteOperator, u: ScalarField) -> np.ndarray:
    """Every policy's directional sum at every interior node, shape (policies,) + interior_shape."""
    s = second_differences(opd, u)
    return np.tensordot(opd.weights, s, axes=([1], [0]))


def _embed(grid: Grid, interior: np.ndarray) -> ScalarField:
    full = np.zeros(grid.shape)
    full[(slice(1, -1),) * grid.dim] = interior
    return ScalarField(grid, full)


def apply(opd: DiscreteOperator, u: ScalarField) -> ScalarField:
    """Discrete F(D^2 u) at interior nodes; boundary entries are 0."""
    return _embed(opd.grid, policy_values(opd, u).max(axis=0))


def active_policy(opd: DiscreteOperator, u: ScalarField) -> np.ndarray:
    """Argmax policy per interior node (lowest index on ties), shape interior_shape."""
    return np.argmax(policy_values(opd, u), axis=0)


def apply_policy(opd: DiscreteOperator, u: ScalarField, policy: np.ndarray) -> ScalarField:
    """Value of a frozen policy field; boundary entries are 0."""
    vals = policy_values(opd, u)
    picked = np.take_along_axis(vals, np.asarray(policy)[None, ...], axis=0)[0]
    return _embed(opd.grid, picked)


def assemble(
    opd: DiscreteOperator, policy: np.ndarray, boundary: ScalarField
) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """
    Linear system of a frozen policy over the interior unknowns.

    Returns (A, lift) such that apply_policy(u) restricted to the interior,
    flattened in C order, equals A @ u_interior + lift, where lift carries the
    Dirichlet values of ``boundary``.
    """
    grid = opd.grid
    ishape = grid.interior_shape
    n_int = int(np.prod(ishape))
    pol = np.asarray(policy).ravel()
    if pol.size != n_int:
        raise ShapeError(f"policy has {pol.size} entries for {n_int} interior nodes")

    w = opd.weights[pol]  # (n_int, directions)
    coords = np.indices(ishape).reshape(grid.dim, -1) + 1
    rows_all = np.arange(n_int)
    g = boundary.values

    rows: List[np.ndarray] = [rows_all]
    cols: List[np.ndarray] = [rows_all]
    data: List[np.ndarray] = [-2.0 * w.sum(axis=1)]
    lift = np.zeros(n_int)
    upper = np.asarray(grid.n)[:, None] - 2
    for k, d in enumerate(opd.directions):
        off = np.asarray(d.offset)[:, None]
        for sign in (1, -1):
            nb = coords + sign * off
            inside = np.all((nb >= 1) & (nb <= upper), axis=0)
            if np.any(inside):
                rows.append(rows_all[inside])
                cols.append(np.ravel_multi_index(tuple(nb[:, inside] - 1), ishape))
                data.append(w[inside, k])
            outside = ~inside
            if np.any(outside):
                lift[outside] += w[outside, k] * g[tuple(nb[:, outside])]
    a = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_int, n_int),
    ).tocsr()
    return a, lift


def consistency_residual(opd: DiscreteOperator, hessian: np.ndarray) -> float:
    """Max over policies of |sum_v c_v xi_v^T H xi_v - tr(A H)| for a constant Hessian."""
    h = np.asarray(hessian, dtype=float)
    worst = 0.0
    for alpha, a in enumerate(opd.family):
        total = 0.0
        for k, (v, xi, _) in enumerate(direction_set(opd.grid)):
            total += opd.coefficients[alpha, k] * float(xi @ h @ xi)
        worst = max(worst, abs(total - float(np.sum(a * h))))
    return worst
