"""
Tests for experiment configs, the run pipeline, artifacts and the command line
"""
import json
import os
import sys

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from cli.artifacts import RunManifest, sha256_file, write_csv
from cli.config import load_config, parse_config
from cli.main import app
from cli.pipeline import EXIT_CONFIG, EXIT_OK, convergence_study, run_experiment
from cli import verify as verify_module
from cli.verify import AcceptanceSuite, SuiteSizes, run_item, verify
from core.errors import ConfigError
from core.grid import ScalarField
from core.params import Params
from monitoring.run_metrics import RunMetrics

runner = CliRunner()


def oracle_doc(n=257, **overrides):
    doc = {
        "name": "oracle",
        "gamma": 1.5,
        "operator": {"kind": "trace"},
        "domain": {"lo": [-1.0], "hi": [1.0]},
        "n": n,
        "boundary": {"kind": "halfspace", "direction": [1.0]},
    }
    doc.update(overrides)
    return doc


def write_doc(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# --- config ----------------------------------------------------------------

def test_parse_config_defaults():
    cfg = parse_config(oracle_doc())
    assert cfg.dim == 1
    assert cfg.analysis.kappa_tau == 1.0
    assert cfg.analysis.tau_scaling == "grid"
    assert cfg.analysis.r0_fraction == 0.25
    assert cfg.analysis.hessian_margin_fraction == 0.25
    problem = cfg.to_problem()
    assert problem.grid.n == (257,)
    assert problem.params.beta == pytest.approx(4.0)


def test_parse_config_rejects_iteration_mode():
    with pytest.raises(ConfigError) as exc:
        parse_config(oracle_doc(solver={"iteration": "lagged_rhs"}))
    assert exc.value.path == "solver.iteration"


@pytest.mark.parametrize(
    "overrides,path",
    [
        ({"gamma": 2.5}, "gamma"),
        ({"extra_key": 1}, "extra_key"),
        ({"domain": {"lo": [0.0], "hi": [1.0, 2.0]}}, "domain"),
        ({"boundary": {"kind": "ring"}}, "boundary.kind"),
        ({"solver": {"relaxation": 0.0}}, "solver.relaxation"),
    ],
)
def test_parse_config_errors_carry_path(overrides, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(oracle_doc(**overrides))
    assert exc.value.path == path


def test_parse_config_rejects_invalid_bellman_family():
    doc = oracle_doc(operator={"kind": "bellman", "lam": 2.0, "family": [[[3.0]]]})
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_config_hash_is_canonical():
    a = parse_config(oracle_doc())
    b = parse_config(dict(reversed(list(oracle_doc().items()))))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != parse_config(oracle_doc(n=129)).config_hash()


# --- artifacts ---------------------------------------------------------------

def test_csv_format(tmp_path):
    path = write_csv(pd.DataFrame({"x": [0.1], "u": [1.0 / 3.0]}), tmp_path / "t.csv")
    text = path.read_bytes().decode()
    assert text == "x,u\n0.10000000000000001,0.33333333333333331\n"


def test_manifest_checksums(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("abc")
    manifest = RunManifest(name="t", config_hash="h", command="run")
    manifest.add_files([f])
    manifest.stage_times["solve"] = 1.23456789
    path = manifest.write(tmp_path)
    data = json.loads(path.read_text())
    assert data["files"]["a.txt"] == sha256_file(f)
    assert data["stage_times"]["solve"] == pytest.approx(1.234568)


def test_run_metrics_textfile(tmp_path):
    metrics = RunMetrics("t")
    with metrics.stage("solve"):
        pass
    metrics.record_solve(3, 7, 1e-11, True)
    metrics.record_free_boundary(5)
    metrics.write(tmp_path / "metrics.prom")
    text = (tmp_path / "metrics.prom").read_text()
    assert "lab_howard_steps_total 7.0" in text
    assert "lab_free_boundary_points 5.0" in text
    assert "solve" in metrics.stage_times


# --- pipeline ----------------------------------------------------------------

def test_run_experiment_writes_artifacts(tmp_path):
    cfg = parse_config(oracle_doc(n=513, analysis={"tau_scaling": "profile", "kappa_tau": 0.5}))
    outcome = run_experiment(cfg, tmp_path)
    assert outcome.exit_code == EXIT_OK
    for name in ("solution.csv", "fb.csv", "residuals.csv", "growth.csv", "density.csv",
                 "report.json", "metrics.prom", "manifest.json"):
        assert (tmp_path / name).exists(), name
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["solve"]["converged"] is True
    assert report["thresholds"]["tau_scaling"] == "profile"
    assert abs(report["blowup_point"][0]) <= 2 * (2.0 / 512)
    assert 3.9 <= report["growth"]["slope"] <= 4.1
    assert report["lipschitz"]["value"] == 0.0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.config_hash()
    assert "solution.csv" in manifest["files"]
    solution = pd.read_csv(tmp_path / "solution.csv")
    assert list(solution.columns) == ["x", "u"]
    assert len(solution) == 513


def test_run_without_regular_point_skips_point_measurements(tmp_path):
    # at n=65 the density profile has too few radii, so nothing is classified regular
    cfg = parse_config(oracle_doc(n=65))
    outcome = run_experiment(cfg, tmp_path)
    report = outcome.report
    assert outcome.exit_code == EXIT_OK
    assert report.blowup_point is None
    assert report.growth is None
    assert any("no regular free-boundary point" in w for w in report.warnings)


def test_run_is_reproducible(tmp_path):
    cfg = parse_config(oracle_doc(n=65))
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("solution.csv", "fb.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_convergence_study(tmp_path):
    cfg = parse_config(oracle_doc(n=65))
    outcome = convergence_study(cfg, 2, tmp_path)
    assert outcome.exit_code == EXIT_OK
    table = pd.read_csv(tmp_path / "convergence.csv")
    assert table["n"].tolist() == [65, 129]
    assert table["linf_error"].iloc[1] < table["linf_error"].iloc[0]
    assert table["observed_order"].iloc[1] > 1.0


# --- command line ------------------------------------------------------------

def test_cli_run(tmp_path):
    path = write_doc(tmp_path, oracle_doc(n=65))
    out = tmp_path / "out"
    result = runner.invoke(app, ["run", str(path), "--out", str(out)])
    assert result.exit_code == EXIT_OK
    assert (out / "run.log").exists()


def test_cli_rejects_bad_config(tmp_path):
    path = write_doc(tmp_path, oracle_doc(gamma=3.0))
    result = runner.invoke(app, ["run", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_CONFIG


@pytest.mark.parametrize("n,levels", [(65, 1), (64, 2)])
def test_cli_convergence_argument_errors(tmp_path, n, levels):
    path = write_doc(tmp_path, oracle_doc(n=n))
    result = runner.invoke(app, ["convergence", str(path), "--levels", str(levels), "--out", str(tmp_path / "o")])
    assert result.exit_code == EXIT_CONFIG


def test_cli_verify_seed_and_threads(tmp_path):
    out = tmp_path / "v"
    result = runner.invoke(app, [
        "verify", "--out", str(out), "--item", "structural", "--reduced", "--seed", "7", "--threads", "2",
    ])
    assert result.exit_code == EXIT_OK
    summary = json.loads((out / "verify_summary.json").read_text())
    assert summary["seed"] == 7
    assert summary["items"][0]["thresholds"]["seed"] == 7


# --- acceptance suite --------------------------------------------------------

REDUCED_ITEMS = [
    "oracle_trace", "oracle_pucci", "growth_exponent", "harnack_uniformity", "hessian_ratio",
    "blowup", "regular_density", "c1_trend", "structural",
]


@pytest.fixture(scope="module")
def reduced_suite():
    return AcceptanceSuite(sizes=SuiteSizes.reduced(), threads=2)


def test_blowup_levels_keep_r_over_h():
    assert SuiteSizes().blowup_levels() == [(0.25, 129), (0.125, 257), (0.0625, 513)]
    assert SuiteSizes.reduced().blowup_levels() == [(0.25, 33), (0.125, 65), (0.0625, 129)]


@pytest.mark.parametrize("name", REDUCED_ITEMS)
def test_reduced_item_runs(reduced_suite, name):
    item = run_item(getattr(reduced_suite, name))
    assert item.errors == []
    assert item.measured
    assert json.dumps(item.to_dict(), default=float)


def test_reduced_oracle_and_growth_values(reduced_suite):
    oracle = reduced_suite.oracle_trace()
    errors = oracle.measured["linf_errors"]
    assert errors[0] > errors[1] > errors[2]
    assert min(oracle.measured["orders"]) > 1.5
    assert oracle.measured["fb_offset"] <= 2 * (2.0 / 256)

    growth = reduced_suite.growth_exponent()
    assert 3.8 <= growth.measured["gamma_1.5_trace"] <= 4.2
    assert 3.8 <= growth.measured["gamma_1.5_pucci"] <= 4.2
    assert 9.0 <= growth.measured["gamma_1.8"] <= 11.0


def test_reduced_blowup_reports_every_radius(reduced_suite):
    item = reduced_suite.blowup()
    assert item.measured["n"] == [33, 65, 129]
    assert len(item.measured["distances"]) == 3
    assert all(d >= 0 for d in item.measured["distances"])
    # the bump is symmetric about the diagonal and the reference point sits on it
    x, y = item.measured["x0"]
    assert x == pytest.approx(y)


def test_reduced_structural_and_subharmonic_pass(reduced_suite):
    assert reduced_suite.structural().passed
    reduced_suite.oracle_trace()
    assert reduced_suite.subharmonic().passed


def test_subharmonic_item_catches_rhs_sign_bug(monkeypatch):
    suite = AcceptanceSuite(sizes=SuiteSizes.reduced())
    suite.oracle_trace()
    assert suite.subharmonic().passed
    monkeypatch.setattr(Params, "rhs", lambda self, u: -np.power(np.maximum(u, 0.0), self.gamma - 1.0))
    assert not suite.subharmonic().passed


def test_oracle_item_catches_wrong_profile(monkeypatch):
    exact = verify_module.halfspace_profile
    monkeypatch.setattr(
        verify_module, "halfspace_profile",
        lambda spec, gamma, e, grid: ScalarField(grid, 1.01 * exact(spec, gamma, e, grid).values),
    )
    suite = AcceptanceSuite(sizes=SuiteSizes.reduced())
    assert not suite.oracle_trace().passed


def test_verify_twice_is_identical(tmp_path):
    items = ["structural", "oracle_pucci"]
    codes = [
        verify(tmp_path / name, only=items, seed=3, threads=2, sizes=SuiteSizes.reduced())
        for name in ("a", "b")
    ]
    assert codes[0] == codes[1]
    a = (tmp_path / "a" / "verify_summary.json").read_bytes()
    b = (tmp_path / "b" / "verify_summary.json").read_bytes()
    assert a == b
