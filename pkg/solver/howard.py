"""
Howard Policy Iteration
Solves max_alpha L_alpha u - c u = f with Dirichlet data by freezing policies
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as spla
from loguru import logger

from core.errors import NumericalError
from core.grid import ScalarField
from discretization.stencil import DiscreteOperator, assemble, policy_values

SWITCH_EPS = 64 * np.finfo(float).eps

LINEAR_SOLVERS = ("direct", "iterative")


@dataclass
class HowardResult:
    """Outcome of one policy iteration."""
    u: ScalarField
    policy: np.ndarray  # interior_shape
    steps: int
    converged: bool
    residual: float  # Bellman residual at unheld interior nodes
    fallbacks: int = 0  # iterative solves replaced by direct factorization


def _banded_solve(a: sparse.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Tridiagonal LU for the 1D systems."""
    n = a.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = a.diagonal(1)
    ab[1] = a.diagonal(0)
    ab[2, :-1] = a.diagonal(-1)
    return scipy.linalg.solve_banded((1, 1), ab, b)


def _iterative_solve(a: sparse.csr_matrix, b: np.ndarray, x0: np.ndarray, rtol: float):
    diag = a.diagonal()
    inv = np.where(diag != 0, 1.0 / np.where(diag != 0, diag, 1.0), 1.0)
    precond = spla.LinearOperator(a.shape, matvec=lambda x: inv * x)
    return spla.bicgstab(a, b, x0=x0, rtol=rtol, atol=0.0, M=precond, maxiter=10 * a.shape[0])


def linear_solve(
    a: sparse.csr_matrix,
    b: np.ndarray,
    dim: int,
    method: str = "direct",
    x0: Optional[np.ndarray] = None,
    rtol: float = 1e-12,
    policy: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, bool]:
    """
    Solve one frozen-policy system.

    Returns (x, fell_back). Banded LU in 1D; in 2D sparse LU or
    Jacobi-preconditioned BiCGSTAB that falls back to LU when it misses rtol.

    Raises:
        NumericalError: singular system or non-finite solution
    """
    fell_back = False
    try:
        if dim == 1:
            x = _banded_solve(a, b)
        elif method == "iterative":
            x, info = _iterative_solve(a, b, b * 0.0 if x0 is None else x0, rtol)
            if info != 0:
                logger.warning(f"BiCGSTAB stopped with info={info}; falling back to sparse LU")
                x = spla.spsolve(a.tocsc(), b)
                fell_back = True
        else:
            x = spla.spsolve(a.tocsc(), b)
    except (np.linalg.LinAlgError, RuntimeError, ValueError) as e:
        raise NumericalError(f"linear solve failed: {e}", policy_snapshot=policy) from e

    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericalError("linear solve produced non-finite values", policy_snapshot=policy)
    return x, fell_back


def howard_solve(
    opd: DiscreteOperator,
    boundary: ScalarField,
    rhs: np.ndarray,
    guess: ScalarField,
    coefficient: Optional[np.ndarray] = None,
    held: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    method: str = "direct",
    linear_rtol: float = 1e-12,
) -> HowardResult:
    """
    Policy iteration for max_alpha (L_alpha u) - c u = f on the interior.

    Args:
        opd: Discrete operator
        boundary: Dirichlet values (interior entries ignored)
        rhs: f, interior_shape
        guess: Field whose active policy starts the iteration
        coefficient: c >= 0, interior_shape (None means 0)
        held: Interior nodes forced to 0
        tol: Bellman residual at which the iteration stops early
        method: "direct" or "iterative" (2D only)
        linear_rtol: Relative tolerance of the iterative linear solver

    A node switches policy only on strict improvement; the iteration stops
    when no node switches or the residual drops below ``tol``. The step cap
    is policies x interior nodes.
    """
    grid = opd.grid
    ishape = grid.interior_shape
    n_int = int(np.prod(ishape))
    inner = (slice(1, -1),) * grid.dim
    c = np.zeros(ishape) if coefficient is None else np.asarray(coefficient, dtype=float)
    held = np.zeros(ishape, dtype=bool) if held is None else np.asarray(held, dtype=bool)
    c = np.where(held, 0.0, c)
    f = np.where(held, 0.0, np.asarray(rhs, dtype=float)).ravel()
    keep = ~held.ravel()
    c_flat = np.where(keep, c.ravel(), 0.0)

    full = np.array(boundary.values, copy=True)
    full[inner] = np.where(held, 0.0, guess.values[inner])
    u = ScalarField(grid, full)
    policy = np.argmax(policy_values(opd, u), axis=0)

    cap = opd.num_policies * n_int
    steps = 0
    fallbacks = 0
    converged = False
    residual = np.inf
    while steps < cap:
        steps += 1
        a, lift = assemble(opd, policy, boundary)
        a = a - sparse.diags(c_flat)
        b = f - lift
        if not np.all(keep):
            # held rows become identity rows with value 0
            mask = sparse.diags(keep.astype(float))
            a = (mask @ a + sparse.diags((~keep).astype(float))).tocsr()
            b = np.where(keep, b, 0.0)
        x, fell = linear_solve(
            a.tocsr(), b, grid.dim, method, x0=full[inner].ravel(), rtol=linear_rtol, policy=policy
        )
        fallbacks += int(fell)
        full[inner] = x.reshape(ishape)
        u = ScalarField(grid, full)

        vals = policy_values(opd, u)
        current = np.take_along_axis(vals, policy[None, ...], axis=0)[0]
        best = np.argmax(vals, axis=0)
        best_vals = np.take_along_axis(vals, best[None, ...], axis=0)[0]
        bellman = np.where(held, 0.0, best_vals - c * full[inner] - np.asarray(rhs).reshape(ishape))
        residual = float(np.max(np.abs(bellman))) if bellman.size else 0.0

        scale = 1.0 + float(np.max(np.abs(vals))) if vals.size else 1.0
        switch = (best_vals > current + SWITCH_EPS * scale) & ~held
        if residual <= tol or not np.any(switch):
            converged = True
            break
        policy = np.where(switch, best, policy)
        logger.debug(f"Howard step {steps}: {int(switch.sum())} switches, residual {residual:.3e}")

    if not converged:
        logger.warning(f"Howard iteration hit its cap of {cap} steps (residual {residual:.3e})")
    return HowardResult(u=u, policy=policy, steps=steps, converged=converged, residual=residual, fallbacks=fallbacks)
