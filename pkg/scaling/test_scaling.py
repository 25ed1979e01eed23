"""
Tests for rescalings, blow-up diagnostics and the scale-invariant measurements
"""
import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.errors import GeometryError, InsufficientResolutionError, ParameterError
from core.grid import Grid, ScalarField
from core.params import Params
from freeboundary.extraction import TauScaling, extract
from operators.halfspace import halfspace_coefficient, halfspace_profile
from operators.operator_spec import OperatorSpec
from scaling.blowup import convexity_margin, direction_lattice, monotonicity_cone, profile_distance, shift_window
from scaling.measurements import (
    fit_growth_exponent,
    harnack_constant,
    hessian_ratio_sup,
    lipschitz_constant,
    nondegeneracy_constant,
)
from scaling.report import ScalingReport, jsonable
from scaling.rescaling import interpolate, reference_grid, rescale

PARAMS = Params(1.5)
TRACE = OperatorSpec.trace()
C = 1.0 / 144.0


def profile(dim, n, spec=TRACE, e=None):
    e = e or ((1.0,) if dim == 1 else (1.0, 0.0))
    return halfspace_profile(spec, 1.5, e, Grid.uniform(dim, -1.0, 1.0, n))


def test_direction_lattice():
    assert direction_lattice(1).tolist() == [[1.0], [-1.0]]
    dirs = direction_lattice(2, 8)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)
    np.testing.assert_allclose(dirs[2], [0.0, 1.0], atol=1e-15)


def test_reference_grid_and_interpolation():
    ref = reference_grid(2)
    assert ref.n == (129, 129)
    assert ref.lo == (-1.1, -1.1)
    u = ScalarField.from_function(Grid.uniform(2, 0.0, 1.0, 5), lambda x: x[:, 0] + 2 * x[:, 1])
    np.testing.assert_allclose(interpolate(u, np.array([[0.3, 0.6], [2.0, 0.5]])), [1.5, 2.0])


def test_rescale_halfspace_profile_is_invariant():
    u = profile(2, 129)
    resc = rescale(u, (0.0, 0.0), 0.5, PARAMS, TRACE)
    assert resc.target.grid.shape == (129, 129)
    assert resc.interpolation_scale == pytest.approx((u.grid.h_max / 0.5) ** 2)
    fit = profile_distance(resc, TRACE, PARAMS)
    np.testing.assert_allclose(fit.direction, [1.0, 0.0], atol=1e-12)
    assert fit.coefficient == pytest.approx(C)
    assert fit.distance <= 0.05 * C
    assert resc.to_dict()["n_ref"] == 129


def test_rescale_geometry_errors():
    u = profile(2, 33)
    with pytest.raises(GeometryError):
        rescale(u, (0.0, 0.0), 2 * u.grid.h_max, PARAMS, TRACE)
    with pytest.raises(GeometryError):
        rescale(u, (0.8, 0.0), 0.5, PARAMS, TRACE)
    with pytest.raises(ParameterError):
        rescale(u, (0.0,), 0.5, PARAMS, TRACE)


def test_profile_distance_1d_pucci():
    spec = OperatorSpec.pucci_plus(2.0)
    u = profile(1, 513, spec)
    fit = profile_distance(rescale(u, (0.0,), 0.25, PARAMS, spec), spec, PARAMS)
    assert fit.direction == [1.0]
    assert fit.coefficient == pytest.approx(halfspace_coefficient(spec, 1.5, (1.0,)))
    assert fit.distance <= 0.05 * fit.coefficient


def test_convexity_and_monotonicity_of_halfspace_blowup():
    resc = rescale(profile(2, 129), (0.0, 0.0), 0.5, PARAMS, TRACE)
    assert convexity_margin(resc) >= -1e-8
    mono = monotonicity_cone(resc, 0.5, (1.0, 0.0))
    assert mono.value >= -1e-12
    assert mono.directions == 25
    assert monotonicity_cone(resc, 1.5, (1.0, 0.0)).directions == 0


def test_growth_exponent_of_exact_profile():
    u = profile(1, 1025)
    fit = fit_growth_exponent(u, (0.0,), 0.5, 8 * u.grid.h_max)
    assert fit.slope == pytest.approx(4.0, abs=1e-6)
    assert len(fit.radii) == 6
    with pytest.raises(InsufficientResolutionError):
        fit_growth_exponent(u, (0.0,), 0.5, 0.2)


def test_harnack_constant():
    u = profile(2, 65)
    value = harnack_constant(u, (0.5, 0.0), 0.4, PARAMS)
    assert np.isfinite(value) and value > 0
    with pytest.raises(GeometryError):
        harnack_constant(u, (0.8, 0.0), 0.4, PARAMS)


@pytest.mark.parametrize("spec,target", [(TRACE, 1.0), (OperatorSpec.pucci_plus(2.0), 0.5)], ids=["trace", "pucci"])
def test_hessian_ratio_of_exact_profile(spec, target):
    u = profile(1, 1025, spec)
    c = halfspace_coefficient(spec, 1.5, (1.0,))
    tau = c * (4 * u.grid.h_max) ** 4
    ratio = hessian_ratio_sup(u, PARAMS, tau)
    assert ratio.value == pytest.approx(target, rel=0.02)
    assert not ratio.empty
    assert hessian_ratio_sup(u, PARAMS, 10.0).empty


def test_nondegeneracy_of_exact_profile():
    u = profile(1, 1025)
    res = nondegeneracy_constant(u, (0.0,), PARAMS, [0.5, 0.25, 0.125])
    assert res.value == pytest.approx(C, rel=1e-9)
    with pytest.raises(ParameterError):
        nondegeneracy_constant(u, (0.0,), PARAMS, [])


def test_report_serialises_non_finite_as_null():
    report = ScalingReport(name="t", config_hash="abc")
    report.harnack.append({"center": [0.0], "R": 0.1, "value": float("nan")})
    report.growth = {"slope": np.float64(4.0), "radii": np.array([0.5, 0.25])}
    data = json.loads(report.to_json())
    assert data["harnack"][0]["value"] is None
    assert data["growth"]["radii"] == [0.5, 0.25]
    assert report.max_harnack is None or np.isnan(report.max_harnack)
    assert jsonable({"x": np.int64(3), "ok": np.bool_(True)}) == {"x": 3, "ok": True}


def test_profile_distance_fits_a_shifted_boundary():
    grid = Grid.uniform(2, -1.0, 1.0, 129)
    delta = 0.3 * grid.h_max
    u = ScalarField.from_function(grid, lambda x: C * np.maximum(x[:, 0] - delta, 0.0) ** 4)
    resc = rescale(u, (0.0, 0.0), 0.5, PARAMS, TRACE)
    through_x0 = profile_distance(resc, TRACE, PARAMS)
    fit = profile_distance(resc, TRACE, PARAMS, shift=2 * grid.h_max / 0.5)
    assert through_x0.distance >= 0.02 * C
    assert fit.shift == pytest.approx(delta / 0.5, abs=1e-4)
    assert fit.distance <= 1e-3 * C
    np.testing.assert_allclose(fit.direction, [1.0, 0.0], atol=1e-12)


def test_shift_window_covers_threshold_reach():
    u = profile(2, 129)
    resc = rescale(u, (0.0, 0.0), 0.5, PARAMS, TRACE)
    h = u.grid.h_max
    tau = 0.5 * C * h ** 4
    assert shift_window(resc, tau, C) == pytest.approx((0.5 ** 0.25 * h + h) / 0.5)
    assert shift_window(resc, 0.0, C) == pytest.approx(h / 0.5)


def radial(power):
    # reference nodes over [-1.1, 1.1] coincide with these source nodes
    grid = Grid.uniform(2, -2.2, 2.2, 257)
    return ScalarField.from_function(grid, lambda x: np.sum(x ** 2, axis=1) ** (power / 2.0))


def test_convexity_margin_of_quadratic_is_two():
    resc = rescale(radial(2), (0.0, 0.0), 1.0, PARAMS, TRACE)
    assert convexity_margin(resc) == pytest.approx(2.0, abs=1e-6)


def test_monotonicity_cone_fails_for_radial_target():
    resc = rescale(radial(4), (0.0, 0.0), 1.0, PARAMS, TRACE)
    mono = monotonicity_cone(resc, 0.5, (1.0, 0.0))
    assert mono.directions > 0
    assert mono.value < -0.1


def test_lipschitz_constant_of_halfspace_is_zero():
    u = profile(2, 129)
    fb = extract(u, PARAMS, TRACE, 0.5, TauScaling.PROFILE)
    est = lipschitz_constant(fb, (0.0, 0.0), (1.0, 0.0), 0.5)
    assert est.value == pytest.approx(0.0, abs=1e-12)
    assert est.pairs > 0
    assert est.points >= 32


def test_lipschitz_constant_of_wedge():
    grid = Grid.uniform(2, -1.0, 1.0, 129)
    u = ScalarField.from_function(grid, lambda x: C * np.maximum(x[:, 0] - 0.5 * np.abs(x[:, 1]), 0.0) ** 4)
    fb = extract(u, PARAMS, TRACE, 0.5, TauScaling.PROFILE)
    est = lipschitz_constant(fb, (0.0, 0.0), (1.0, 0.0), 0.5)
    assert 0.35 <= est.value <= 0.7
    assert est.to_dict()["normal"] == [1.0, 0.0]


def test_lipschitz_constant_edge_cases():
    u = profile(1, 65)
    fb = extract(u, PARAMS, TRACE, 0.5, TauScaling.PROFILE)
    est = lipschitz_constant(fb, (0.0,), (1.0,), 0.5)
    assert est.value == 0.0 and est.pairs == 0
    with pytest.raises(ParameterError):
        lipschitz_constant(fb, (0.0,), (0.0,), 0.5)
    with pytest.raises(ParameterError):
        lipschitz_constant(fb, (0.0,), (1.0,), 0.0)


def test_hessian_ratio_margin_skips_boundary_layer():
    grid = Grid.uniform(1, -1.0, 1.0, 257)
    u = ScalarField.from_function(
        grid, lambda x: C * np.maximum(x[:, 0], 0.0) ** 4 + 0.1 * np.maximum(x[:, 0] - 0.9, 0.0) ** 2
    )
    tau = C * (4 * grid.h_max) ** 4
    assert hessian_ratio_sup(u, PARAMS, tau).value > 2.0
    inner = hessian_ratio_sup(u, PARAMS, tau, margin=0.25)
    assert inner.value == pytest.approx(1.0, rel=0.02)
    assert inner.location[0] <= 0.75
    with pytest.raises(ParameterError):
        hessian_ratio_sup(u, PARAMS, tau, margin=-0.1)
