"""
Tests for the monotone stencil discretization
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.errors import DecompositionError, ShapeError
from core.grid import Grid, ScalarField
from discretization.stencil import (
    active_policy,
    apply,
    apply_policy,
    assemble,
    build,
    consistency_residual,
    decompose,
    direction_set,
    pucci_family,
)
from operators.operator_spec import OperatorSpec

LAM = 2.0


def quadratic(grid, h):
    h = np.asarray(h, dtype=float)
    return ScalarField.from_function(grid, lambda x: 0.5 * np.einsum("ni,ij,nj->n", x, h, x))


def test_decompose_reproduces_matrix():
    grid = Grid.uniform(2, -1.0, 1.0, 17)
    a = np.array([[1.25, 0.75], [0.75, 1.25]])
    c = decompose(a, grid)
    assert np.all(c >= 0)
    total = sum(ck * np.outer(xi, xi) for ck, (_, xi, _) in zip(c, direction_set(grid)))
    np.testing.assert_allclose(total, a, atol=1e-12)


def test_decompose_rejects_strongly_anisotropic_matrix():
    grid = Grid.uniform(2, -1.0, 1.0, 17)
    with pytest.raises(DecompositionError) as exc:
        decompose(np.array([[1.0, 2.0], [2.0, 5.0]]), grid)
    assert exc.value.matrix is not None
    with pytest.raises(ShapeError):
        decompose(np.eye(1), grid)


def test_pucci_family_spectra():
    fam = pucci_family(LAM, 2)
    assert len(fam) == 6
    for a in fam:
        ev = np.linalg.eigvalsh(a)
        assert ev.min() >= 1.0 / LAM - 1e-12 and ev.max() <= LAM + 1e-12
    assert len(pucci_family(LAM, 1)) == 2
    assert len(pucci_family(1.0, 2)) == 1


@pytest.mark.parametrize("dim", [1, 2])
def test_build_labels_and_policies(dim):
    grid = Grid.uniform(dim, -1.0, 1.0, 9)
    assert build(OperatorSpec.trace(), grid).num_policies == 1
    pucci = build(OperatorSpec.pucci_plus(LAM), grid)
    assert pucci.label == ("pucci_plus_d4" if dim == 2 else "pucci_plus")
    assert np.all(pucci.weights >= 0)


def test_each_policy_exact_on_quadratics():
    grid = Grid.uniform(2, -1.0, 1.0, 11)
    opd = build(OperatorSpec.pucci_plus(LAM), grid)
    rng = np.random.default_rng(2)
    for _ in range(10):
        b = rng.normal(size=(2, 2))
        h = b + b.T
        assert consistency_residual(opd, h) < 1e-12
        u = quadratic(grid, h)
        for alpha, a in enumerate(opd.family):
            pol = np.full(grid.interior_shape, alpha)
            vals = apply_policy(opd, u, pol).values[1:-1, 1:-1]
            np.testing.assert_allclose(vals, np.sum(a * h), atol=1e-9)


def test_trace_stencil_is_exact_laplacian_on_quadratics():
    grid = Grid.uniform(2, 0.0, 1.0, 9)
    u = quadratic(grid, [[2.0, 1.0], [1.0, 4.0]])
    out = apply(build(OperatorSpec.trace(), grid), u)
    np.testing.assert_allclose(out.values[1:-1, 1:-1], 6.0, atol=1e-9)
    assert np.all(out.values[0, :] == 0.0)


def test_active_policy_attains_max():
    grid = Grid.uniform(2, -1.0, 1.0, 9)
    opd = build(OperatorSpec.pucci_plus(LAM), grid)
    u = ScalarField.from_function(grid, lambda x: np.sin(2 * x[:, 0]) * np.cos(3 * x[:, 1]))
    pol = active_policy(opd, u)
    np.testing.assert_allclose(apply_policy(opd, u, pol).values, apply(opd, u).values)


@pytest.mark.parametrize("dim", [1, 2])
def test_assemble_matches_frozen_policy(dim):
    grid = Grid.uniform(dim, -1.0, 1.0, 9)
    opd = build(OperatorSpec.pucci_plus(LAM), grid)
    u = ScalarField.from_function(grid, lambda x: np.exp(x.sum(axis=1)) + x[:, 0] ** 3)
    pol = active_policy(opd, u)
    a, lift = assemble(opd, pol, u)
    interior = u.values[(slice(1, -1),) * dim].ravel()
    expected = apply_policy(opd, u, pol).values[(slice(1, -1),) * dim].ravel()
    np.testing.assert_allclose(a @ interior + lift, expected, rtol=1e-12, atol=1e-9)


def test_assembled_matrix_is_monotone():
    grid = Grid.uniform(2, -1.0, 1.0, 9)
    opd = build(OperatorSpec.pucci_plus(LAM), grid)
    pol = np.random.default_rng(4).integers(0, opd.num_policies, size=grid.interior_shape)
    a, _ = assemble(opd, pol, ScalarField.zeros(grid))
    dense = a.toarray()
    off = dense - np.diag(np.diag(dense))
    assert np.all(np.diag(dense) < 0)
    assert np.all(off >= 0)
    assert np.all(dense.sum(axis=1) <= 1e-9)
    with pytest.raises(ShapeError):
        assemble(opd, pol[:2], ScalarField.zeros(grid))


def test_decompose_example_axis_weights():
    grid = Grid.uniform(2, -1.0, 1.0, 9)
    c = decompose(np.array([[1.0, 0.5], [0.5, 1.0]]), grid)
    np.testing.assert_allclose(c[:2], [0.5, 0.5])
    assert c[3] == 0.0
    u = ScalarField.from_function(grid, lambda x: x[:, 0] * x[:, 1])
    opd = build(OperatorSpec.bellman([np.eye(2), np.array([[1.0, 0.5], [0.5, 1.0]])], 2.0), grid)
    pol = np.ones(grid.interior_shape, dtype=int)
    np.testing.assert_allclose(apply_policy(opd, u, pol).values[1:-1, 1:-1], 1.0, atol=1e-10)


def test_apply_is_monotone_under_single_entry_perturbation():
    grid = Grid.uniform(2, -1.0, 1.0, 9)
    opd = build(OperatorSpec.pucci_plus(LAM), grid)
    rng = np.random.default_rng(9)
    u = ScalarField(grid, rng.normal(size=grid.shape))
    base = apply(opd, u).values
    for idx in [(4, 4), (3, 5), (1, 1)]:
        bumped = np.array(u.values)
        bumped[idx] += 0.1
        out = apply(opd, ScalarField(grid, bumped)).values
        diff = out - base
        assert diff[idx] <= 1e-12
        mask = np.ones(grid.shape, dtype=bool)
        mask[idx] = False
        assert np.all(diff[mask] >= -1e-12)


def test_second_order_consistency_on_quartic():
    errors = []
    for n in (17, 33, 65):
        grid = Grid.uniform(2, -1.0, 1.0, n)
        u = ScalarField.from_function(grid, lambda x: x[:, 0] ** 4 + x[:, 0] ** 2 * x[:, 1] ** 2)
        x, y = grid.mesh
        exact = 12 * x ** 2 + 2 * y ** 2 + 2 * x ** 2
        out = apply(build(OperatorSpec.trace(), grid), u).values
        errors.append(np.max(np.abs(out - exact)[1:-1, 1:-1]))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.1)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.1)
