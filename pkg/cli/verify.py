"""
Acceptance Suite
Fixed experiments checked against their pass thresholds, rendered with rich
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from cli.artifacts import write_json
from cli.pipeline import blowup_point, hessian_tau
from core.errors import AltPhillipsError, GeometryError
from core.grid import Grid
from core.params import Params
from freeboundary.extraction import FreeBoundarySet, PointClass, TauScaling, extract
from freeboundary.normals import classify, normal_estimate, normal_oscillation
from operators.ellipticity import ellipticity_check, random_symmetric
from operators.halfspace import halfspace_coefficient, halfspace_profile
from operators.operator_spec import OperatorSpec, evaluate, sub_differential
from scaling.blowup import profile_distance, shift_window
from scaling.measurements import fit_growth_exponent, harnack_constant, hessian_ratio_sup
from scaling.rescaling import rescale
from solver.alt_phillips_solver import ProblemSpec, SolveResult, comparison_test, solve, subharmonic_check
from solver.boundary import BoundaryData

console = Console()

ORACLE_LINF = 5e-6
ORACLE_ORDER = 1.9
PROPERTY_SAMPLES = 1000
HARNACK_CENTERS = ((0.5, 0.0), (0.5, 0.5), (0.5, -0.5), (0.3, 0.3), (0.3, -0.3))
HARNACK_RADII = (0.1, 0.2, 0.4)
BLOWUP_RADII = (0.25, 0.125, 0.0625)
BUMP_AMPLITUDE = 0.01
GAMMA = 1.5
SQUARE_WIDTH = 2.0

# The suite extracts at half the half-space profile one cell from its
# boundary: the oracle free boundary then lands on the node at x = 0.
SUITE_KAPPA_TAU = 0.5
SUITE_TAU_SCALING = TauScaling.PROFILE
HESSIAN_CELLS = 4.0
HESSIAN_MARGIN_FRACTION = 0.25  # of the inradius


@dataclass(frozen=True)
class SuiteSizes:
    """Grid sizes of every acceptance experiment."""
    oracle: Tuple[int, ...] = (257, 513, 1025)
    gamma18: int = 2049
    square: Tuple[int, ...] = (129, 257)  # Harnack and bump Hessian refinement pair
    bump: int = 257  # classified bump boundary
    regular: int = 257
    comparison: int = 129
    determinism: int = 257
    blowup_cells: int = 16  # r / h at every blow-up radius
    r0_fraction: float = 0.25  # R0 = fraction * inradius

    @classmethod
    def reduced(cls) -> "SuiteSizes":
        """Small grids for smoke runs; thresholds stay those of the full suite."""
        return cls(
            oracle=(65, 129, 257),
            gamma18=513,
            square=(65, 129),
            bump=129,
            regular=129,
            comparison=33,
            determinism=65,
            blowup_cells=4,
            r0_fraction=0.5,
        )

    def blowup_levels(self) -> List[Tuple[float, int]]:
        """(r, n) pairs keeping r / h fixed across the blow-up radii."""
        return [(r, int(round(SQUARE_WIDTH * self.blowup_cells / r)) + 1) for r in BLOWUP_RADII]


@dataclass
class VerifyItem:
    """One acceptance item; measured values and thresholds are both recorded."""
    name: str
    passed: bool
    measured: Dict[str, Any] = field(default_factory=dict)
    thresholds: Dict[str, Any] = field(default_factory=dict)
    errors: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "thresholds": self.thresholds,
            "errors": self.errors,
        }


def suite_boundary(res: SolveResult) -> FreeBoundarySet:
    return extract(res.u, res.problem.params, res.problem.operator, SUITE_KAPPA_TAU, SUITE_TAU_SCALING)


class AcceptanceSuite:
    """Runs every acceptance item once, sharing solves between items."""

    def __init__(self, sizes: Optional[SuiteSizes] = None, seed: int = 0, threads: int = 1):
        self.sizes = sizes or SuiteSizes()
        self.seed = seed
        self.threads = max(1, threads)
        self._cache: Dict[str, SolveResult] = {}
        self.converged: List[SolveResult] = []

    def _solve_all(self, jobs: Sequence[Tuple[str, ProblemSpec]]) -> List[SolveResult]:
        """Solve the missing problems on the thread pool; the cache fills in job order."""
        missing = [(k, p) for k, p in dict(jobs).items() if k not in self._cache]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            done = list(pool.map(lambda job: solve(job[1]), missing))
        for (key, _), res in zip(missing, done):
            self._cache[key] = res
            if res.converged:
                self.converged.append(res)
        return [self._cache[k] for k, _ in jobs]

    def _solve(self, key: str, problem: ProblemSpec) -> SolveResult:
        return self._solve_all([(key, problem)])[0]

    @staticmethod
    def oracle_problem(spec: OperatorSpec, gamma: float, n: int, tol: float = 1e-10) -> ProblemSpec:
        grid = Grid.uniform(1, -1.0, 1.0, n)
        return ProblemSpec(
            params=Params(gamma, spec.lam), operator=spec, grid=grid,
            boundary=BoundaryData.halfspace((1.0,)), tol_residual=tol,
        )

    @staticmethod
    def square_problem(spec: OperatorSpec, boundary: BoundaryData, n: int) -> ProblemSpec:
        grid = Grid.uniform(2, -0.5 * SQUARE_WIDTH, 0.5 * SQUARE_WIDTH, n)
        return ProblemSpec(params=Params(GAMMA, spec.lam), operator=spec, grid=grid, boundary=boundary)

    def _bump(self, n: int) -> SolveResult:
        return self._solve(f"bump-2d-{n}", self.square_problem(
            OperatorSpec.trace(), BoundaryData.bump(BUMP_AMPLITUDE), n))

    def _classified(self, res: SolveResult) -> FreeBoundarySet:
        return classify(res.u, res.problem.params, suite_boundary(res), r0_fraction=self.sizes.r0_fraction)

    # --- items -----------------------------------------------------------

    def _oracle_item(self, name: str, spec: OperatorSpec) -> VerifyItem:
        sizes = self.sizes.oracle
        results = self._solve_all([(f"{name}-{n}", self.oracle_problem(spec, GAMMA, n)) for n in sizes])
        errors, orders = [], []
        for res in results:
            exact = halfspace_profile(spec, GAMMA, (1.0,), res.u.grid)
            errors.append(float(np.max(np.abs(res.u.values - exact.values))))
        for e0, e1 in zip(errors[:-1], errors[1:]):
            orders.append(float(np.log2(e0 / e1)) if e1 > 0 else float("inf"))
        res = results[-1]
        fb = suite_boundary(res)
        h = res.u.grid.h_max
        fb_offset = float(np.max(np.abs(fb.coordinates[:, 0]))) if not fb.is_empty else float("inf")
        passed = (
            all(r.converged for r in results)
            and errors[-1] <= ORACLE_LINF
            and min(orders) >= ORACLE_ORDER
            and fb_offset <= 2 * h
        )
        return VerifyItem(
            name=name, passed=passed,
            measured={"linf_errors": errors, "orders": orders, "fb_offset": fb_offset, "fb_points": len(fb.points)},
            thresholds={"linf_at_finest": ORACLE_LINF, "min_order": ORACLE_ORDER, "fb_offset": 2 * h, "n": list(sizes)},
        )

    def oracle_trace(self) -> VerifyItem:
        return self._oracle_item("oracle_1d_trace", OperatorSpec.trace())

    def oracle_pucci(self) -> VerifyItem:
        return self._oracle_item("oracle_1d_pucci", OperatorSpec.pucci_plus(2.0))

    def _oracle_result(self, label: str) -> SolveResult:
        spec = OperatorSpec.trace() if label == "trace" else OperatorSpec.pucci_plus(2.0)
        n = self.sizes.oracle[-1]
        return self._solve(f"oracle_1d_{label}-{n}", self.oracle_problem(spec, GAMMA, n))

    def growth_exponent(self) -> VerifyItem:
        measured, ok = {}, True
        for label in ("trace", "pucci"):
            slope = self._growth(self._oracle_result(label))
            measured[f"gamma_1.5_{label}"] = slope
            ok &= 3.9 <= slope <= 4.1
        n = self.sizes.gamma18
        res = self._solve(f"gamma18-{n}", self.oracle_problem(OperatorSpec.trace(), 1.8, n, tol=1e-18))
        slope = self._growth(res)
        measured["gamma_1.8"] = slope
        ok &= res.converged and 9.7 <= slope <= 10.3
        return VerifyItem(
            name="growth_exponent", passed=bool(ok), measured=measured,
            thresholds={"gamma_1.5": [3.9, 4.1], "gamma_1.8": [9.7, 10.3], "r0_fraction": self.sizes.r0_fraction},
        )

    def _growth(self, res: SolveResult) -> float:
        x0 = blowup_point(self._classified(res))
        if x0 is None:
            raise GeometryError(f"no regular free-boundary point for {res.operator_label}")
        grid = res.u.grid
        return fit_growth_exponent(res.u, x0, self.sizes.r0_fraction * grid.inradius, 8 * grid.h_max).slope

    def harnack_uniformity(self) -> VerifyItem:
        sizes = self.sizes.square
        results = self._solve_all([
            (f"halfspace-2d-{n}", self.square_problem(OperatorSpec.trace(), BoundaryData.halfspace((1.0, 0.0)), n))
            for n in sizes
        ])
        maxima = {}
        for n, res in zip(sizes, results):
            maxima[n] = float(max(
                harnack_constant(res.u, c, r, res.problem.params)
                for c in HARNACK_CENTERS for r in HARNACK_RADII
            ))
        ratio = max(maxima.values()) / min(maxima.values())
        passed = all(np.isfinite(v) for v in maxima.values()) and ratio <= 2.0
        return VerifyItem(
            name="harnack_uniformity", passed=passed,
            measured={**{f"max_{n}": v for n, v in maxima.items()}, "ratio": ratio},
            thresholds={"ratio": 2.0, "samples": len(HARNACK_CENTERS) * len(HARNACK_RADII)},
        )

    @staticmethod
    def _hessian(res: SolveResult) -> float:
        params = res.problem.params
        tau = hessian_tau(suite_boundary(res), params, HESSIAN_CELLS)
        margin = HESSIAN_MARGIN_FRACTION * res.u.grid.inradius
        return hessian_ratio_sup(res.u, params, tau, margin=margin).value

    def hessian_ratio(self) -> VerifyItem:
        measured, ok = {}, True
        for label, target in (("trace", 1.0), ("pucci", 0.5)):
            value = self._hessian(self._oracle_result(label))
            measured[f"oracle_{label}"] = value
            ok &= abs(value - target) <= 0.05 * target
        coarse, fine = self.sizes.square
        self._solve_all([
            (f"bump-2d-{n}", self.square_problem(OperatorSpec.trace(), BoundaryData.bump(BUMP_AMPLITUDE), n))
            for n in (coarse, fine)
        ])
        bump = [self._hessian(self._bump(n)) for n in (coarse, fine)]
        change = abs(bump[1] - bump[0]) / max(bump[0], 1e-300)
        measured.update({f"bump_{coarse}": bump[0], f"bump_{fine}": bump[1], "bump_change": change})
        ok &= change <= 0.2
        return VerifyItem(
            name="hessian_ratio", passed=bool(ok), measured=measured,
            thresholds={
                "oracle_rel": 0.05, "bump_change": 0.2,
                "tau_cells": HESSIAN_CELLS, "margin_fraction": HESSIAN_MARGIN_FRACTION,
            },
        )

    def _bump_boundary(self) -> Tuple[SolveResult, FreeBoundarySet]:
        res = self._bump(self.sizes.bump)
        return res, self._classified(res)

    def blowup(self) -> VerifyItem:
        """
        Profile distances about one regular bump point, radius by radius.

        Each radius is measured on its own bump solve with r / h fixed, so the
        rescaled resolution is the same at every radius. x0 at each level is
        the boundary node closest to the regular reference point.
        """
        _, fb_ref = self._bump_boundary()
        x_ref = blowup_point(fb_ref)
        if x_ref is None:
            raise GeometryError("bump solution has no regular free-boundary point")
        levels = self.sizes.blowup_levels()
        results = self._solve_all([
            (f"bump-2d-{n}", self.square_problem(OperatorSpec.trace(), BoundaryData.bump(BUMP_AMPLITUDE), n))
            for _, n in levels
        ])
        fits, centers = [], []
        for (r, _), res in zip(levels, results):
            params, spec = res.problem.params, res.problem.operator
            fb = suite_boundary(res)
            if fb.is_empty:
                raise GeometryError(f"empty bump free boundary at n={res.u.grid.n[0]}")
            x0 = fb.coordinates[int(np.argmin(np.linalg.norm(fb.coordinates - x_ref, axis=1)))]
            resc = rescale(res.u, x0, r, params, spec)
            fits.append(profile_distance(resc, spec, params, shift=shift_window(resc, fb.tau, fb.c_ref)))
            centers.append(x0.tolist())

        dists = [f.distance for f in fits]
        last = results[-1]
        c_gamma = halfspace_coefficient(last.problem.operator, GAMMA, (1.0, 0.0))
        normal = normal_estimate(last.u, last.problem.params, centers[-1], suite_boundary(last))
        angle = float("inf")
        if normal is not None:
            angle = float(np.arccos(np.clip(np.dot(fits[-1].direction, normal), -1.0, 1.0)))
        decreasing = all(b < a for a, b in zip(dists[:-1], dists[1:]))
        passed = decreasing and dists[-1] <= 0.15 * c_gamma and angle <= 0.1
        return VerifyItem(
            name="blowup", passed=passed,
            measured={
                "x0": x_ref.tolist(), "centers": centers, "n": [n for _, n in levels],
                "distances": dists, "shifts": [f.shift for f in fits], "angle": angle,
            },
            thresholds={
                "final_distance": 0.15 * c_gamma, "angle": 0.1,
                "radii": list(BLOWUP_RADII), "r_over_h": self.sizes.blowup_cells,
            },
        )

    def regular_density(self) -> VerifyItem:
        n = self.sizes.regular
        res = self._solve(f"halfspace-2d-{n}", self.square_problem(
            OperatorSpec.trace(), BoundaryData.halfspace((1.0, 0.0)), n))
        fb = self._classified(res)
        dens = [p.density_smallest_r for p in fb.points]
        all_regular = bool(fb.points) and all(p.tag is PointClass.REGULAR for p in fb.points)
        in_band = all(d is not None and 0.4 <= d <= 0.6 for d in dens)
        finite = [d for d in dens if d is not None]
        return VerifyItem(
            name="regular_density", passed=all_regular and in_band,
            measured={
                "points": len(fb.points), "counts": fb.counts(),
                "min_density": min(finite) if finite else None, "max_density": max(finite) if finite else None,
            },
            thresholds={"density": [0.4, 0.6]},
        )

    def c1_trend(self) -> VerifyItem:
        _, fb = self._bump_boundary()
        osc = [normal_oscillation(fb, rho) for rho in BLOWUP_RADII]
        passed = all(b <= a + 0.02 for a, b in zip(osc[:-1], osc[1:]))
        return VerifyItem(
            name="c1_trend", passed=passed, measured={"oscillation": osc},
            thresholds={"slack": 0.02, "rho": list(BLOWUP_RADII)},
        )

    def structural(self) -> VerifyItem:
        rng = np.random.default_rng(self.seed)
        lam = 2.0
        specs = {
            "trace": OperatorSpec.trace(),
            "pucci_plus": OperatorSpec.pucci_plus(lam),
            "bellman": OperatorSpec.bellman(
                [np.eye(2), np.diag([lam, 1.0 / lam]), np.array([[1.25, 0.75], [0.75, 1.25]])], lam
            ),
        }
        pucci = specs["pucci_plus"]
        violations: Dict[str, int] = {}
        for label, spec in specs.items():
            bad = 0
            for _ in range(PROPERTY_SAMPLES):
                m = random_symmetric(rng, 2)
                n = random_symmetric(rng, 2)
                t = float(rng.uniform(0.01, 10.0))
                fm, fn = evaluate(spec, m), evaluate(spec, n)
                scale = 1e-12 * (1.0 + abs(fm) + abs(fn))
                bad += abs(evaluate(spec, m * t) - t * fm) > scale * (1.0 + t)
                bad += evaluate(spec, (m + n) * 0.5) > 0.5 * (fm + fn) + scale
                bad += fm > evaluate(pucci, m) + scale
                choice = sub_differential(spec, m)
                bad += evaluate(spec, m + n) - fm < choice.apply(n) - scale
            violations[label] = int(bad)
            ell = ellipticity_check(spec, PROPERTY_SAMPLES, rng_seed=self.seed + 1, dim=2)
            violations[f"{label}_ellipticity"] = 0 if ell.passed else len(ell.failures)

        base = self.oracle_problem(OperatorSpec.trace(), GAMMA, self.sizes.comparison)
        half = BoundaryData.halfspace((1.0,))
        pairs = [
            (BoundaryData.constant(0.0), half),
            (half, half.scaled(2.0)),
            (BoundaryData.bump(BUMP_AMPLITUDE), BoundaryData.bump(BUMP_AMPLITUDE).scaled(1.5)),
        ]
        comparisons = [comparison_test(base, g1, g2) for g1, g2 in pairs]

        det = self.oracle_problem(OperatorSpec.pucci_plus(lam), GAMMA, self.sizes.determinism)
        r1, r2 = solve(det), solve(det)
        deterministic = np.array_equal(r1.u.values, r2.u.values) and r1.residual_history == r2.residual_history

        passed = all(v == 0 for v in violations.values()) and all(c.passed for c in comparisons) and deterministic
        return VerifyItem(
            name="structural", passed=passed,
            measured={
                "property_violations": violations,
                "comparison_violations": [c.max_violation for c in comparisons],
                "deterministic": deterministic,
            },
            thresholds={"samples": PROPERTY_SAMPLES, "seed": self.seed, "comparison_tol": comparisons[0].tolerance},
        )

    def subharmonic(self) -> VerifyItem:
        """Runs last so that it covers every converged solve of the suite."""
        reports = {f"{r.operator_label}-{r.u.grid.shape}": subharmonic_check(r) for r in self.converged}
        return VerifyItem(
            name="subharmonic", passed=bool(reports) and all(r.passed for r in reports.values()),
            measured={k: r.worst_margin for k, r in reports.items()},
            thresholds={k: r.threshold for k, r in reports.items()},
        )

    def items(self) -> List[Callable[[], VerifyItem]]:
        return [
            self.oracle_trace,
            self.oracle_pucci,
            self.growth_exponent,
            self.harnack_uniformity,
            self.hessian_ratio,
            self.blowup,
            self.regular_density,
            self.c1_trend,
            self.structural,
            self.subharmonic,
        ]


def run_item(fn: Callable[[], VerifyItem]) -> VerifyItem:
    name = fn.__name__
    try:
        return fn()
    except (AltPhillipsError, ArithmeticError, ValueError, TypeError) as e:
        logger.error(f"Verification item {name} raised: {e}")
        return VerifyItem(name=name, passed=False, errors=[f"{type(e).__name__}: {e}"])


def print_summary(results: List[VerifyItem]) -> None:
    console.print("\n" + "=" * 60)
    console.print("[bold]VERIFICATION SUMMARY[/bold]")
    console.print("=" * 60)

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Item", style="cyan")
    table.add_column("Status")
    table.add_column("Measured")
    for item in results:
        status = "[green]✓ PASSED[/green]" if item.passed else "[red]✗ FAILED[/red]"
        shown = "; ".join(item.errors) if item.errors else ", ".join(
            f"{k}={_short(v)}" for k, v in item.measured.items()
        )
        table.add_row(item.name, status, shown)
    console.print(table)


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    if isinstance(value, (list, tuple)) and value and all(isinstance(v, float) for v in value):
        return "[" + ", ".join(f"{v:.3g}" for v in value) + "]"
    return str(value)


def verify(
    out_dir: Path,
    only: Optional[List[str]] = None,
    seed: int = 0,
    threads: int = 1,
    sizes: Optional[SuiteSizes] = None,
) -> int:
    """Run the acceptance suite; exit code 0 when every item passes, 4 otherwise."""
    console.print(Panel.fit(
        "[bold cyan]Alt-Phillips Lab: Acceptance Suite[/bold cyan]\n"
        "Oracles, scaling laws, free-boundary diagnostics",
        border_style="cyan",
    ))
    suite = AcceptanceSuite(sizes=sizes, seed=seed, threads=threads)
    fns = [f for f in suite.items() if not only or f.__name__ in only]
    results = []
    for fn in fns:
        console.print(f"\nRunning {fn.__name__}...", end="")
        item = run_item(fn)
        console.print(" [green]✓[/green]" if item.passed else " [red]✗[/red]")
        results.append(item)

    print_summary(results)
    all_passed = all(r.passed for r in results)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(
        {
            "passed": all_passed,
            "seed": seed,
            "sizes": asdict(suite.sizes),
            "items": [r.to_dict() for r in results],
        },
        out_dir / "verify_summary.json",
    )
    if all_passed:
        console.print("[bold green]✓ ALL ITEMS PASSED![/bold green]")
        return 0
    console.print("[bold red]✗ SOME ITEMS FAILED[/bold red]")
    return 4
