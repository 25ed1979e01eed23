"""
Experiment Pipeline
Solve, extract the free boundary, measure the scaling laws and write artifacts
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from cli.artifacts import RunManifest, solution_frame, write_csv, write_json
from cli.config import ExperimentConfig
from core.errors import AltPhillipsError, GeometryError, InsufficientResolutionError
from core.grid import ScalarField
from core.params import Params
from freeboundary.density import density_profile
from freeboundary.extraction import FreeBoundarySet, PointClass, TauScaling, extract, to_frame
from freeboundary.normals import classify, normal_oscillation
from monitoring.run_metrics import RunMetrics
from operators.ellipticity import ellipticity_check
from operators.halfspace import halfspace_profile
from operators.operator_spec import OperatorSpec
from scaling.blowup import convexity_margin, monotonicity_cone, profile_distance, shift_window
from scaling.measurements import (
    fit_growth_exponent,
    harnack_constant,
    hessian_ratio_sup,
    lipschitz_constant,
    nondegeneracy_constant,
)
from scaling.report import ScalingReport
from scaling.rescaling import rescale
from solver.alt_phillips_solver import SolveResult, solve, subharmonic_check
from solver.boundary import BoundaryKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_VERIFY_FAILED = 4


@dataclass
class RunOutcome:
    exit_code: int
    out_dir: Path
    report: Optional[ScalingReport] = None
    result: Optional[SolveResult] = None
    files: List[Path] = field(default_factory=list)


def blowup_point(fb: FreeBoundarySet) -> Optional[np.ndarray]:
    """
    Regular point farthest from the domain boundary.

    None when no point is tagged regular: singular candidates and
    unclassified points never stand in.
    """
    regular = [p for p in fb.points if p.tag is PointClass.REGULAR]
    if not regular:
        return None
    grid = fb.grid
    coords = np.array([p.coordinate for p in regular])
    dist = np.min(
        np.minimum(coords - np.asarray(grid.lo), np.asarray(grid.hi) - coords), axis=1
    )
    return coords[int(np.argmax(dist))]


def hessian_tau(fb: FreeBoundarySet, params: Params, cells: float) -> float:
    """c_ref (k h)^beta: excludes the k cells next to the free boundary."""
    return fb.c_ref * (cells * fb.grid.h_max) ** params.beta


def _blowup_row(
    u: ScalarField, x0: np.ndarray, r: float, params: Params, spec: OperatorSpec,
    axis: Optional[np.ndarray], delta: float, fb: FreeBoundarySet,
) -> Dict:
    resc = rescale(u, x0, r, params, spec)
    fit = profile_distance(resc, spec, params, shift=shift_window(resc, fb.tau, fb.c_ref))
    mono_axis = axis if axis is not None else np.asarray(fit.direction)
    mono = monotonicity_cone(resc, delta, mono_axis)
    return {
        "r": r,
        "distance": fit.distance,
        "coefficient": fit.coefficient,
        "direction": fit.direction,
        "shift": fit.shift,
        "convexity_margin": convexity_margin(resc),
        "monotonicity": mono.value,
        "monotonicity_directions": mono.directions,
        "interpolation_scale": resc.interpolation_scale,
    }


def analyze(
    cfg: ExperimentConfig,
    res: SolveResult,
    metrics: RunMetrics,
    seed: int = 0,
    threads: int = 1,
) -> Tuple[ScalingReport, FreeBoundarySet, Dict[str, pd.DataFrame]]:
    """Every measurement the config asks for, in a report plus plot tables."""
    a = cfg.analysis
    params = res.problem.params
    spec = res.problem.operator
    u = res.u
    grid = u.grid
    report = ScalingReport(name=cfg.name, config_hash=cfg.config_hash(), solve=res.summary())
    frames: Dict[str, pd.DataFrame] = {
        "residuals": pd.DataFrame(
            {"iteration": np.arange(len(res.residual_history)), "residual": res.residual_history}
        )
    }

    with metrics.stage("ellipticity"):
        ell = ellipticity_check(spec, a.ellipticity_trials, rng_seed=seed, dim=grid.dim)
        report.thresholds["ellipticity"] = ell.to_dict()

    with metrics.stage("subharmonic"):
        report.subharmonic = subharmonic_check(res).to_dict()

    with metrics.stage("free_boundary"):
        fb = extract(u, params, spec, a.kappa_tau, TauScaling(a.tau_scaling))
        fb = classify(u, params, fb, a.delta_reg, a.r0_fraction, a.normal_window)
        metrics.record_free_boundary(len(fb.points))
        report.free_boundary = {"tau": fb.tau, "c_ref": fb.c_ref, "points": len(fb.points), **fb.counts()}
        frames["fb"] = to_frame(fb)

    r0 = a.r0_fraction * grid.inradius
    h_tau = hessian_tau(fb, params, a.hessian_tau_cells)
    h_margin = a.hessian_margin_fraction * grid.inradius
    report.thresholds.update({
        "tau": fb.tau,
        "kappa_tau": a.kappa_tau,
        "tau_scaling": a.tau_scaling,
        "c_ref": fb.c_ref,
        "r0": r0,
        "delta_reg": a.delta_reg,
        "hessian_tau": h_tau,
        "hessian_tau_cells": a.hessian_tau_cells,
        "hessian_margin": h_margin,
        "growth_min_radius": a.growth_min_cells * grid.h_max,
        "normal_window_cells": a.normal_window,
        "monotonicity_delta": a.monotonicity_delta,
    })

    with metrics.stage("hessian"):
        report.hessian_ratio = hessian_ratio_sup(u, params, h_tau, margin=h_margin).to_dict()

    with metrics.stage("harnack"):
        for center in a.harnack_centers:
            for radius in a.harnack_radii:
                entry = {"center": center, "R": radius}
                try:
                    entry["value"] = harnack_constant(u, center, radius, params)
                except GeometryError as e:
                    entry["value"] = None
                    entry["skipped"] = str(e)
                report.harnack.append(entry)

    x0 = blowup_point(fb)
    if x0 is None:
        what = "free boundary is empty" if fb.is_empty else "no regular free-boundary point"
        report.warnings.append(f"{what}; point-based measurements skipped")
        return report, fb, frames
    report.blowup_point = x0.tolist()
    k0 = fb.find(x0)
    normal = fb.points[k0].normal
    axis = None if normal is None else np.asarray(normal)

    with metrics.stage("lipschitz"):
        if normal is None:
            report.warnings.append("Lipschitz estimate skipped: no normal at the blow-up point")
        else:
            report.lipschitz = lipschitz_constant(
                fb, x0, normal, a.lipschitz_fraction * grid.inradius
            ).to_dict()

    with metrics.stage("growth"):
        try:
            growth = fit_growth_exponent(u, x0, r0, a.growth_min_cells * grid.h_max)
            report.growth = growth.to_dict()
            frames["growth"] = pd.DataFrame({"r": growth.radii, "sup_u": growth.sups})
        except InsufficientResolutionError as e:
            report.warnings.append(f"growth fit skipped: {e}")
        radii = a.nondegeneracy_radii or (report.growth or {}).get("radii", [])
        if radii:
            try:
                report.nondegeneracy = nondegeneracy_constant(u, x0, params, radii).to_dict()
            except InsufficientResolutionError as e:
                report.warnings.append(f"non-degeneracy skipped: {e}")

    with metrics.stage("density"):
        try:
            profile = density_profile(u, fb, x0, r0_fraction=a.r0_fraction, delta_reg=a.delta_reg)
            report.density = profile.to_dict()
            frames["density"] = profile.to_frame()
        except InsufficientResolutionError as e:
            report.warnings.append(f"density profile skipped: {e}")

    with metrics.stage("blowup"):
        usable = []
        for r in a.rescale_radii:
            if r >= 4 * grid.h_max and grid.contains_ball(x0, r):
                usable.append(r)
            else:
                report.warnings.append(f"rescaling radius {r:g} skipped (needs 4h <= r and B_r inside the domain)")
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            rows = list(pool.map(
                lambda r: _blowup_row(u, x0, r, params, spec, axis, a.monotonicity_delta, fb), usable
            ))
        for row in rows:
            report.profile_distances.append(
                {k: row[k] for k in ("r", "distance", "coefficient", "direction", "shift", "interpolation_scale")}
            )
            report.convexity_margins.append({"r": row["r"], "value": row["convexity_margin"]})
            report.monotonicity.append(
                {"r": row["r"], "value": row["monotonicity"], "directions": row["monotonicity_directions"]}
            )
        if rows:
            blow = pd.DataFrame(rows)
            dirs = np.array([row["direction"] for row in rows])
            blow = blow.drop(columns=["direction"])
            for i, name in enumerate(["ex", "ey"][: grid.dim]):
                blow[name] = dirs[:, i]
            frames["blowup"] = blow

    with metrics.stage("oscillation"):
        for rho in a.oscillation_radii:
            report.normal_oscillation.append({"rho": rho, "value": normal_oscillation(fb, rho)})

    return report, fb, frames


def run_experiment(
    cfg: ExperimentConfig, out_dir: Path, seed: int = 0, threads: int = 1
) -> RunOutcome:
    """
    Full run: solve, analyse and write every artifact into out_dir.

    Exit code 0 when the solve converged, 3 otherwise; artifacts are
    written in both cases.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = RunMetrics(cfg.name)
    logger.info(f"Initialized run '{cfg.name}' -> {out_dir}")

    with metrics.stage("solve"):
        res = solve(cfg.to_problem())
    metrics.record_solve(res.iterations, res.howard_steps, res.residual, res.converged)

    report, fb, frames = analyze(cfg, res, metrics, seed=seed, threads=threads)
    exit_code = EXIT_OK if res.converged else EXIT_NOT_CONVERGED

    with metrics.stage("write"):
        files = [
            write_csv(solution_frame(res.u), out_dir / "solution.csv"),
            write_csv(frames["fb"], out_dir / "fb.csv"),
            write_csv(frames["residuals"], out_dir / "residuals.csv"),
        ]
        for name in ("growth", "density", "blowup"):
            if name in frames:
                files.append(write_csv(frames[name], out_dir / f"{name}.csv"))
        files.append(write_json(report.to_dict(), out_dir / "report.json"))

    metrics.write(out_dir / "metrics.prom")
    manifest = RunManifest(
        name=cfg.name, config_hash=cfg.config_hash(), command="run", seed=seed,
        exit_code=exit_code, stage_times=dict(metrics.stage_times),
    )
    manifest.add_files(files)
    manifest.write(out_dir)
    logger.info(f"Run '{cfg.name}' finished with exit code {exit_code}")
    return RunOutcome(exit_code=exit_code, out_dir=out_dir, report=report, result=res, files=files)


def _convergence_level(cfg: ExperimentConfig, n: int) -> Dict:
    res = solve(cfg.to_problem(n))
    params = res.problem.params
    spec = res.problem.operator
    u = res.u
    row = {"n": n, "h": u.grid.h_max, "converged": res.converged, "iterations": res.iterations}

    if cfg.boundary.kind == BoundaryKind.HALFSPACE.value and cfg.boundary.scale == 1.0:
        # the half-space profile is an exact solution only for unscaled data
        exact = halfspace_profile(spec, params.gamma, cfg.boundary.direction, u.grid)
        row["linf_error"] = float(np.max(np.abs(u.values - exact.values)))
    else:
        row["linf_error"] = np.nan

    a = cfg.analysis
    fb = extract(u, params, spec, a.kappa_tau, TauScaling(a.tau_scaling))
    row["hessian_ratio_sup"] = hessian_ratio_sup(
        u, params, hessian_tau(fb, params, a.hessian_tau_cells),
        margin=a.hessian_margin_fraction * u.grid.inradius,
    ).value

    harnack = []
    for center in cfg.analysis.harnack_centers:
        for radius in cfg.analysis.harnack_radii:
            try:
                harnack.append(harnack_constant(u, center, radius, params))
            except GeometryError:
                continue
    row["max_harnack"] = max(harnack) if harnack else np.nan

    row["beta_fit"] = np.nan
    if not fb.is_empty:
        fb = classify(u, params, fb, a.delta_reg, a.r0_fraction, a.normal_window)
    x0 = blowup_point(fb)
    if x0 is None:
        logger.warning(f"beta fit skipped at n={n}: no regular free-boundary point")
        return row
    try:
        row["beta_fit"] = fit_growth_exponent(
            u, x0, a.r0_fraction * u.grid.inradius, a.growth_min_cells * u.grid.h_max
        ).slope
    except AltPhillipsError as e:
        logger.warning(f"beta fit skipped at n={n}: {e}")
    return row


def convergence_study(
    cfg: ExperimentConfig, levels: int, out_dir: Path, threads: int = 1
) -> RunOutcome:
    """
    Nested refinement n_k = (n - 1) 2^k + 1, k = 0..levels-1.

    Writes convergence.csv with the observed order log2(e_{k-1} / e_k).
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = RunMetrics(f"{cfg.name}-convergence")
    sizes = [(cfg.n - 1) * 2 ** k + 1 for k in range(levels)]
    logger.info(f"Initialized convergence study '{cfg.name}': n = {sizes}")

    with metrics.stage("levels"):
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            rows = list(pool.map(lambda n: _convergence_level(cfg, n), sizes))

    table = pd.DataFrame(rows)
    errors = table["linf_error"].to_numpy(dtype=float)
    order = np.full(len(errors), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        order[1:] = np.log2(errors[:-1] / errors[1:])
    table["observed_order"] = order

    files = [write_csv(table, out_dir / "convergence.csv")]
    exit_code = EXIT_OK if bool(table["converged"].all()) else EXIT_NOT_CONVERGED
    metrics.write(out_dir / "metrics.prom")
    manifest = RunManifest(
        name=cfg.name, config_hash=cfg.config_hash(), command=f"convergence --levels {levels}",
        exit_code=exit_code, stage_times=dict(metrics.stage_times),
    )
    manifest.add_files(files)
    manifest.write(out_dir)
    return RunOutcome(exit_code=exit_code, out_dir=out_dir, files=files)
