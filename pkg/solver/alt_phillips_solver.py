"""
Alt-Phillips Solver
Nonnegative solutions of F(D^2 u) = u^(gamma-1) by an outer fixed point over Howard solves
"""
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from loguru import logger

from core.errors import ParameterError
from core.grid import Grid, ScalarField, shifted
from core.params import Params
from discretization.stencil import DiscreteOperator, apply, build
from lab_config import LAB_CONFIG
from operators.halfspace import halfspace_coefficient
from operators.operator_spec import OperatorSpec
from solver.boundary import BoundaryData
from solver.damping_guard import DampingGuard
from solver.howard import LINEAR_SOLVERS, howard_solve

COMPARISON_TOL_FACTOR = 10.0
COEFFICIENT_CEILING = 1e200  # larger absorption coefficients are treated as held at 0


@dataclass(frozen=True)
class ProblemSpec:
    """
    One Dirichlet problem plus solver knobs.

    The outer iteration always lags the absorption coefficient:
    apply(u') - (u + eps)^(gamma-2) u' = 0. Its fixed points are those of
    apply(u') = (u + eps)^(gamma-1), but each step is a proper M-matrix
    problem and the iterates decrease monotonically from the start.
    """
    params: Params
    operator: OperatorSpec
    grid: Grid
    boundary: BoundaryData
    tol_residual: float = LAB_CONFIG.TOL_RESIDUAL
    max_outer: int = LAB_CONFIG.MAX_OUTER
    relaxation: float = LAB_CONFIG.RELAXATION
    rhs_floor: float = 0.0
    linear_solver: str = "direct"

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ParameterError(f"tol_residual={self.tol_residual} must be > 0")
        if self.max_outer < 1:
            raise ParameterError(f"max_outer={self.max_outer} must be >= 1")
        if not 0 < self.relaxation <= 1:
            raise ParameterError(f"relaxation={self.relaxation} outside (0, 1]")
        if not self.rhs_floor >= 0:
            raise ParameterError(f"rhs_floor={self.rhs_floor} must be >= 0")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ParameterError(f"linear_solver={self.linear_solver!r} not in {LINEAR_SOLVERS}")
        self.operator.check_dim(self.grid.dim)

    def with_boundary(self, boundary: BoundaryData) -> "ProblemSpec":
        return dataclasses.replace(self, boundary=boundary)

    def with_grid(self, grid: Grid) -> "ProblemSpec":
        return dataclasses.replace(self, grid=grid)

    def boundary_field(self) -> ScalarField:
        return self.boundary.field(self.grid, self.params.gamma, self.operator)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma": self.params.gamma,
            "beta": self.params.beta,
            "operator": self.operator.to_dict(),
            "grid": {"dim": self.grid.dim, "lo": list(self.grid.lo), "hi": list(self.grid.hi), "n": list(self.grid.n)},
            "boundary": self.boundary.to_dict(),
            "tol_residual": self.tol_residual,
            "max_outer": self.max_outer,
            "relaxation": self.relaxation,
            "rhs_floor": self.rhs_floor,
            "linear_solver": self.linear_solver,
        }

    def contact_floor(self) -> float:
        """Values below this are contact values; the settling test ignores them."""
        e1 = np.zeros(self.grid.dim)
        e1[0] = 1.0
        c_ref = halfspace_coefficient(self.operator, self.params.gamma, e1)
        return LAB_CONFIG.CONTACT_FLOOR_FACTOR * c_ref * self.grid.h_max ** self.params.beta


@dataclass
class SolveResult:
    """Solution with its convergence record."""
    problem: ProblemSpec
    u: ScalarField
    iterations: int
    residual_history: List[float]
    converged: bool
    min_unclamped: float = 0.0
    howard_steps: int = 0
    relaxation: float = 0.0  # relaxation in force at the end
    guard_trips: int = 0
    linear_fallbacks: int = 0
    operator_label: str = ""

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    @property
    def tolerance(self) -> float:
        return residual_tolerance(self.problem, self.u)

    def summary(self) -> Dict[str, Any]:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "howard_steps": self.howard_steps,
            "relaxation": self.relaxation,
            "guard_trips": self.guard_trips,
            "linear_fallbacks": self.linear_fallbacks,
            "min_unclamped": self.min_unclamped,
            "max_u": self.u.max(),
            "operator": self.operator_label,
        }


def residual_tolerance(p: ProblemSpec, u: ScalarField) -> float:
    """tol * (1 + max u^(gamma-1))."""
    return p.tol_residual * (1.0 + float(np.max(p.params.rhs(u.values))))


def residual_field(opd: DiscreteOperator, u: ScalarField, params: Params) -> np.ndarray:
    """apply(u) - u_+^(gamma-1) at every interior node, contact nodes included."""
    inner = (slice(1, -1),) * u.grid.dim
    return apply(opd, u).values[inner] - params.rhs(u.values[inner])


def _residual(opd: DiscreteOperator, u: ScalarField, params: Params) -> float:
    r = residual_field(opd, u, params)
    return float(np.max(np.abs(r))) if r.size else 0.0


def _linearize(p: ProblemSpec, interior: np.ndarray):
    """(coefficient, held) for the next outer step."""
    base = np.maximum(interior, 0.0) + p.rhs_floor
    with np.errstate(divide="ignore", over="ignore"):
        coef = np.power(base, p.params.gamma - 2.0)
    held = ~(base > 0) | ~np.isfinite(coef) | (coef > COEFFICIENT_CEILING)
    return np.where(held, 0.0, coef), held


def settled(previous: np.ndarray, current: np.ndarray, floor: float, rtol: float, slack: float = 0.0) -> bool:
    """
    True when no node above ``floor`` moved by more than rtol of its value.

    Contact values decay geometrically while their residual is already far
    below tolerance; this test keeps the outer loop running until they have
    dropped under the floor.
    """
    active = current > floor
    if not np.any(active):
        return True
    change = np.abs(current - previous)[active]
    return bool(np.all(change <= rtol * current[active] + slack))


def solve(p: ProblemSpec) -> SolveResult:
    """
    Solve F(D^2 u) = u_+^(gamma-1), u >= 0, with the problem's Dirichlet data.

    Starts from the solution of apply(u) = 0 clamped at 0. Each outer step
    solves the lagged-coefficient Bellman problem by policy iteration, clamps
    at 0 and relaxes: u <- (1 - w) u + w clamp(u_new). Stops when the
    interior residual is at most tol * (1 + max u^(gamma-1)) and the last
    update moved no node above the contact floor by more than SETTLE_RTOL
    of its value.

    Non-convergence is reported through ``converged=False``, never raised.

    Raises:
        NumericalError: a linear solve broke down
    """
    grid = p.grid
    inner = (slice(1, -1),) * grid.dim
    opd = build(p.operator, grid)
    g = p.boundary_field()
    logger.info(
        f"Initialized solve: {opd.label} on {grid.shape} grid, gamma={p.params.gamma:g}, "
        f"beta={p.params.beta:g}"
    )

    init = howard_solve(
        opd, g, np.zeros(grid.interior_shape), guess=g,
        tol=LAB_CONFIG.INNER_TOL_FACTOR * p.tol_residual, method=p.linear_solver,
        linear_rtol=LAB_CONFIG.INNER_TOL_FACTOR * p.tol_residual,
    )
    min_unclamped = init.u.min()
    u = init.u.clamped(0.0)
    howard_steps = init.steps
    fallbacks = init.fallbacks

    guard = DampingGuard(name=f"solve[{opd.label}]", relaxation=p.relaxation)
    omega = p.relaxation
    floor = p.contact_floor()
    history = [_residual(opd, u, p.params)]
    converged = history[-1] <= residual_tolerance(p, u)
    iterations = 0

    while not converged and iterations < p.max_outer:
        coef, held = _linearize(p, u.values[inner])
        inner_tol = LAB_CONFIG.INNER_TOL_FACTOR * residual_tolerance(p, u)
        linear_rtol = LAB_CONFIG.INNER_TOL_FACTOR * p.tol_residual
        step = howard_solve(
            opd, g, np.zeros(grid.interior_shape), guess=u, coefficient=coef, held=held,
            tol=inner_tol, method=p.linear_solver, linear_rtol=linear_rtol,
        )
        howard_steps += step.steps
        fallbacks += step.fallbacks
        min_unclamped = step.u.min()

        relaxed = (1.0 - omega) * u.values + omega * np.maximum(step.u.values, 0.0)
        relaxed[grid.boundary_mask] = g.values[grid.boundary_mask]
        previous = u
        u = ScalarField(grid, relaxed)
        iterations += 1

        history.append(_residual(opd, u, p.params))
        # iterative solves are only accurate to linear_rtol
        slack = 0.0 if grid.dim == 1 or p.linear_solver == "direct" else linear_rtol * u.max()
        converged = history[-1] <= residual_tolerance(p, u) and settled(
            previous.values[inner], u.values[inner], floor, LAB_CONFIG.SETTLE_RTOL, slack
        )
        logger.debug(
            f"Outer {iterations}: residual {history[-1]:.3e} "
            f"(tol {residual_tolerance(p, u):.3e}), Howard steps {step.steps}, w={omega:g}"
        )
        omega = guard.record(history[-1])

    if converged:
        logger.info(
            f"Solve converged in {iterations} outer iterations | residual {history[-1]:.3e} | "
            f"Howard steps {howard_steps}"
        )
    else:
        logger.warning(
            f"Solve did NOT converge after {iterations} outer iterations | residual {history[-1]:.3e}"
        )
    return SolveResult(
        problem=p,
        u=u,
        iterations=iterations,
        residual_history=history,
        converged=converged,
        min_unclamped=min_unclamped,
        howard_steps=howard_steps,
        relaxation=omega,
        guard_trips=guard.trips,
        linear_fallbacks=fallbacks,
        operator_label=opd.label,
    )


@dataclass
class ComparisonReport:
    """Result of solving with ordered boundary data g1 <= g2."""
    passed: bool
    precondition_met: bool
    max_violation: float  # max(u1 - u2)
    tolerance: float
    converged: bool
    errors: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "precondition_met": self.precondition_met,
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "converged": self.converged,
            "errors": list(self.errors),
            **self.metadata,
        }


def comparison_test(p: ProblemSpec, g1: BoundaryData, g2: BoundaryData) -> ComparisonReport:
    """Check solve(g1).u <= solve(g2).u + 10 tol when g1 <= g2 on the boundary."""
    p1, p2 = p.with_boundary(g1), p.with_boundary(g2)
    b1, b2 = p1.boundary_field(), p2.boundary_field()
    mask = p.grid.boundary_mask
    gap = float(np.max(b1.values[mask] - b2.values[mask]))
    tol = COMPARISON_TOL_FACTOR * p.tol_residual
    meta = {"g1": g1.to_dict(), "g2": g2.to_dict()}
    if gap > 0:
        logger.warning(f"Comparison precondition violated: g1 - g2 reaches {gap:.3e} on the boundary")
        return ComparisonReport(
            passed=False, precondition_met=False, max_violation=float("nan"), tolerance=tol,
            converged=False, errors=[f"boundary data not ordered (max g1 - g2 = {gap:.3e})"], metadata=meta,
        )

    r1, r2 = solve(p1), solve(p2)
    violation = float(np.max(r1.u.values - r2.u.values))
    errors = []
    if violation > tol:
        errors.append(f"u1 exceeds u2 by {violation:.3e} > {tol:.3e}")
    if not (r1.converged and r2.converged):
        errors.append("a solve did not converge")
    report = ComparisonReport(
        passed=not errors, precondition_met=True, max_violation=violation, tolerance=tol,
        converged=r1.converged and r2.converged, errors=errors, metadata=meta,
    )
    logger.info(f"Comparison test {'passed' if report.passed else 'FAILED'}: max(u1 - u2) = {violation:.3e}")
    return report


@dataclass
class SubharmonicReport:
    """Worst margin of Delta_h u <= u^(gamma-1) against its consistency threshold."""
    passed: bool
    worst_margin: float
    threshold: float
    c_fd: float
    h: float
    location: Optional[List[float]] = None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def discrete_laplacian(u: ScalarField) -> np.ndarray:
    """Axis 3-point Laplacian on the interior."""
    grid = u.grid
    d = grid.dim
    center = shifted(u.values, (0,) * d)
    out = np.zeros(grid.interior_shape)
    for i in range(d):
        plus = tuple(1 if k == i else 0 for k in range(d))
        minus = tuple(-1 if k == i else 0 for k in range(d))
        out += (shifted(u.values, plus) + shifted(u.values, minus) - 2.0 * center) / grid.h[i] ** 2
    return out


def fourth_difference_constant(u: ScalarField) -> float:
    """sum over axes of max |delta^4_i u| / (12 h_i^4)."""
    total = 0.0
    for i in range(u.grid.dim):
        if u.grid.n[i] < 5:
            continue
        d4 = np.diff(u.values, n=4, axis=i)
        total += float(np.max(np.abs(d4))) / (12.0 * u.grid.h[i] ** 4)
    return total


def subharmonic_check(res: SolveResult) -> SubharmonicReport:
    """Delta_h u - u^(gamma-1) <= C_fd h^2 + residual tolerance on the interior."""
    u = res.u
    grid = u.grid
    inner = (slice(1, -1),) * grid.dim
    margin = discrete_laplacian(u) - res.problem.params.rhs(u.values[inner])
    c_fd = fourth_difference_constant(u)
    threshold = c_fd * grid.h_max ** 2 + res.tolerance
    k = int(np.argmax(margin))
    worst = float(margin.ravel()[k])
    where = np.unravel_index(k, grid.interior_shape)
    location = grid.coordinate(tuple(int(i) + 1 for i in where)).tolist()
    report = SubharmonicReport(
        passed=worst <= threshold, worst_margin=worst, threshold=threshold,
        c_fd=c_fd, h=grid.h_max, location=location,
    )
    logger.info(
        f"Subharmonic check {'passed' if report.passed else 'FAILED'}: "
        f"worst margin {worst:.3e} vs threshold {threshold:.3e}"
    )
    return report
