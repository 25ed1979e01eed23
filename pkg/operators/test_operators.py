"""
Tests for the operators package: evaluation, sub-differentials, ellipticity, half-space profiles
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.errors import OperatorValidityError, ParameterError, ShapeError
from core.grid import Grid, SymMatrix, hessian_central
from operators.ellipticity import ellipticity_check, increment_bounds, random_symmetric
from operators.halfspace import halfspace_coefficient, halfspace_profile, rescale_operator
from operators.operator_spec import OperatorKind, OperatorSpec, evaluate, evaluate_many, sub_differential

LAM = 2.0
ROTATED = np.array([[1.25, 0.75], [0.75, 1.25]])


def operators():
    return [
        OperatorSpec.trace(),
        OperatorSpec.pucci_plus(LAM),
        OperatorSpec.bellman([np.eye(2), np.diag([LAM, 1.0 / LAM]), ROTATED], LAM),
    ]


def test_pucci_known_value():
    m = SymMatrix(np.diag([3.0, -1.0]))
    assert evaluate(OperatorSpec.pucci_plus(LAM), m) == pytest.approx(3.0 * LAM - 1.0 / LAM)
    assert evaluate(OperatorSpec.trace(), m) == pytest.approx(2.0)


def test_bellman_validation():
    with pytest.raises(OperatorValidityError):
        OperatorSpec.bellman([np.diag([LAM, 1.0 / LAM])], LAM)
    with pytest.raises(OperatorValidityError):
        OperatorSpec.bellman([np.eye(2), np.diag([3.0, 1.0])], LAM)
    with pytest.raises(OperatorValidityError):
        OperatorSpec(OperatorKind.TRACE, 1.0, (np.eye(2),))
    with pytest.raises(ParameterError):
        OperatorSpec.pucci_plus(0.5)
    bell = operators()[2]
    with pytest.raises(ShapeError):
        evaluate(bell, SymMatrix(np.eye(1)))


@pytest.mark.parametrize("spec", operators(), ids=lambda s: s.label)
def test_structural_properties(spec):
    rng = np.random.default_rng(7)
    pucci = OperatorSpec.pucci_plus(LAM)
    for _ in range(1000):
        m = random_symmetric(rng, 2)
        n = random_symmetric(rng, 2)
        t = float(rng.uniform(0.01, 10.0))
        fm, fn = evaluate(spec, m), evaluate(spec, n)
        tol = 1e-10 * (1.0 + abs(fm) + abs(fn)) * (1.0 + t)
        assert evaluate(spec, m * t) == pytest.approx(t * fm, abs=tol)
        assert evaluate(spec, (m + n) * 0.5) <= 0.5 * (fm + fn) + tol
        assert fm <= evaluate(pucci, m) + tol
        choice = sub_differential(spec, m)
        assert choice.apply(m) == pytest.approx(fm, abs=tol)
        assert evaluate(spec, m + n) - fm >= choice.apply(n) - tol


def test_evaluate_many_matches_scalar():
    rng = np.random.default_rng(11)
    mats = np.stack([random_symmetric(rng, 2).array for _ in range(64)])
    for spec in operators():
        expected = [evaluate(spec, SymMatrix(a)) for a in mats]
        np.testing.assert_allclose(evaluate_many(spec, mats), expected, atol=1e-12)


def test_bellman_sub_differential_lowest_index_on_ties():
    spec = OperatorSpec.bellman([np.eye(2), np.eye(2)], LAM)
    assert sub_differential(spec, SymMatrix(np.eye(2))).index == 0


@pytest.mark.parametrize("spec", operators(), ids=lambda s: s.label)
def test_ellipticity_passes(spec):
    report = ellipticity_check(spec, 500, rng_seed=1, dim=2)
    assert report.passed
    assert report.lower_margin >= 1.0 / spec.lam - 1e-12
    assert report.upper_margin <= 2 * spec.lam + 1e-12
    assert report.to_dict()["operator"] == spec.label


def test_ellipticity_lower_bound_is_one_over_lambda():
    assert increment_bounds(OperatorSpec.trace(), 2) == (1.0, 2.0)
    assert increment_bounds(OperatorSpec.pucci_plus(LAM), 2) == (0.5, 4.0)
    report = ellipticity_check(OperatorSpec.trace(), 300, rng_seed=2, dim=2)
    assert report.lower_bound == 1.0
    # tr(P) >= |P| = 1 for PSD P
    assert report.lower_margin >= 1.0 - 1e-12


def test_ellipticity_is_deterministic_for_a_seed():
    a = ellipticity_check(OperatorSpec.pucci_plus(LAM), 200, rng_seed=5)
    b = ellipticity_check(OperatorSpec.pucci_plus(LAM), 200, rng_seed=5)
    assert a.to_dict() == b.to_dict()
    with pytest.raises(ParameterError):
        ellipticity_check(OperatorSpec.trace(), 0)


def test_halfspace_coefficients():
    assert halfspace_coefficient(OperatorSpec.trace(), 1.5, (1.0,)) == pytest.approx(1.0 / 144.0)
    assert halfspace_coefficient(OperatorSpec.pucci_plus(LAM), 1.5, (1.0,)) == pytest.approx(1.0 / 576.0)
    with pytest.raises(ParameterError):
        halfspace_coefficient(OperatorSpec.trace(), 1.5, (1.0, 1.0))


def test_halfspace_profile_solves_the_equation():
    spec = OperatorSpec.pucci_plus(LAM)
    grid = Grid.uniform(2, -1.0, 1.0, 201)
    e = (np.cos(0.3), np.sin(0.3))
    u = halfspace_profile(spec, 1.5, e, grid)
    idx = (160, 150)
    x = grid.coordinate(idx)
    assert x @ np.asarray(e) > 0.3
    lhs = evaluate(spec, hessian_central(u, idx))
    rhs = u.values[idx] ** 0.5
    assert lhs == pytest.approx(rhs, rel=1e-3)


def test_rescale_operator_is_identity_for_homogeneous_kinds():
    spec = OperatorSpec.pucci_plus(LAM)
    assert rescale_operator(spec, 0.25, 4.0) == spec
    with pytest.raises(ParameterError):
        rescale_operator(spec, 0.0, 4.0)


def test_evaluate_examples():
    pucci = OperatorSpec.pucci_plus(LAM)
    assert evaluate(pucci, SymMatrix(np.diag([1.0, -1.0]))) == pytest.approx(1.5)
    assert evaluate(pucci, SymMatrix(np.eye(2))) == pytest.approx(4.0)
    assert evaluate(pucci, SymMatrix.zeros(2)) == 0.0


def test_halfspace_coefficient_near_gamma_one():
    assert halfspace_coefficient(OperatorSpec.trace(), 1.0 + 1e-9, (1.0,)) == pytest.approx(0.5, rel=1e-6)
