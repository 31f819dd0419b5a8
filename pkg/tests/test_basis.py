import numpy as np
import pytest

from fregmice.basis import (BSplineBasis, expand_with_se, ff_design_rows,
                            ff_weight_vector, tensor_penalty)
from fregmice.errors import DimensionError, DomainError, InvalidGridError
from fregmice.fdgrid import FunctionalSample, quadrature_weights, uniform_grid


def greville(basis):
    """Knot averages: the coefficients that make the spline reproduce t."""
    k = basis.knots
    return np.array([k[u + 1:u + 4].mean() for u in range(basis.n_basis)])


def test_rows_sum_to_one_and_are_nonnegative():
    rng = np.random.default_rng(0)
    basis = BSplineBasis((0.0, 10.0), 12)
    rows = basis.eval(rng.uniform(0, 10, size=1000))
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
    assert rows.min() >= 0.0


def test_endpoints_hit_a_single_function():
    basis = BSplineBasis((-1.0, 3.0), 9)
    b = basis.eval([-1.0, 3.0])
    np.testing.assert_allclose(b[0], np.eye(9)[0], atol=1e-12)
    np.testing.assert_allclose(b[1], np.eye(9)[8], atol=1e-12)


def test_at_most_four_functions_active_per_point():
    basis = BSplineBasis((0.0, 1.0), 10)
    rows = basis.eval(np.linspace(0, 1, 57))
    assert int((rows > 1e-12).sum(axis=1).max()) <= 4


def test_reproduces_linear_functions():
    basis = BSplineBasis((0.0, 5.0), 8)
    t = np.linspace(0, 5, 41)
    np.testing.assert_allclose(basis.eval(t) @ greville(basis), t, atol=1e-10)


def test_evaluation_clamps_roundoff_but_rejects_outsiders():
    basis = BSplineBasis((0.0, 1.0), 6)
    basis.eval([1.0 + 1e-10, -1e-10])       # inside the tolerance: clamped
    with pytest.raises(DomainError):
        basis.eval([1.1])
    with pytest.raises(DomainError):
        basis.eval([-0.01])


def test_constructor_rejects_bad_input():
    with pytest.raises(InvalidGridError):
        BSplineBasis((0.0, 1.0), 3)
    with pytest.raises(InvalidGridError):
        BSplineBasis((1.0, 1.0), 6)
    with pytest.raises(InvalidGridError):
        BSplineBasis((0.0, np.inf), 6)


def test_basis_equality():
    assert BSplineBasis((0.0, 1.0), 6) == BSplineBasis((0.0, 1.0), 6)
    assert BSplineBasis((0.0, 1.0), 6) != BSplineBasis((0.0, 1.0), 7)
    assert BSplineBasis((0.0, 1.0), 6) != BSplineBasis((0.0, 2.0), 6)


def test_penalty_kills_affine_coefficient_vectors():
    for n_basis in (4, 7, 12, 20):
        basis = BSplineBasis((0.0, 10.0), n_basis)
        pen = basis.penalty()
        scale = np.abs(pen).max()
        np.testing.assert_allclose(pen, pen.T, atol=1e-12 * scale)
        assert np.abs(pen @ np.ones(n_basis)).max() < 1e-8 * scale
        assert np.abs(pen @ greville(basis)).max() < 1e-8 * scale


def test_penalty_is_psd_with_nullity_two():
    basis = BSplineBasis((0.0, 1.0), 11)
    vals = np.linalg.eigvalsh(basis.penalty())
    assert vals[0] > -1e-10 * vals[-1]
    assert int((vals < 1e-8 * vals[-1]).sum()) == 2


def test_penalty_quadform_is_the_curvature_energy():
    # Coefficients that reproduce t^2 (pairwise knot products); the spline's
    # second derivative is the constant 2, so the energy is 4 * span.
    basis = BSplineBasis((0.0, 2.0), 9)
    k = basis.knots
    c = np.array([(k[u + 1] * k[u + 2] + k[u + 1] * k[u + 3]
                   + k[u + 2] * k[u + 3]) / 3.0 for u in range(basis.n_basis)])
    t = np.linspace(0, 2, 33)
    np.testing.assert_allclose(basis.eval(t) @ c, t ** 2, atol=1e-10)
    energy = float(c @ basis.penalty() @ c)
    assert abs(energy - 8.0) < 1e-8 * 8.0


def test_second_derivative_of_linear_spline_is_zero():
    basis = BSplineBasis((0.0, 3.0), 7)
    d2 = basis.eval_deriv2(np.linspace(0, 3, 29))
    assert np.abs(d2 @ greville(basis)).max() < 1e-9 * np.abs(d2).max()


def test_expand_with_se_matches_direct_computation():
    rng = np.random.default_rng(5)
    basis = BSplineBasis((0.0, 1.0), 8)
    coef = rng.normal(size=8)
    a = rng.normal(size=(8, 8))
    cov = a @ a.T
    pts = np.linspace(0, 1, 17)
    est, se = expand_with_se(basis, coef, cov, pts)
    bmat = basis.eval(pts)
    np.testing.assert_allclose(est, bmat @ coef, atol=1e-12)
    np.testing.assert_allclose(se, np.sqrt(np.diag(bmat @ cov @ bmat.T)),
                               rtol=1e-10)
    with pytest.raises(DimensionError):
        expand_with_se(basis, coef[:5], cov, pts)


def test_tensor_penalty_null_space_is_bilinear():
    bs = BSplineBasis((0.0, 10.0), 6)
    bt = BSplineBasis((0.0, 1.0), 5)
    pen = tensor_penalty(bs.penalty(), bt.penalty())
    assert pen.shape == (30, 30)
    np.testing.assert_allclose(pen, pen.T, atol=1e-10 * np.abs(pen).max())
    scale = np.abs(pen).max()
    for u in (np.ones(6), greville(bs)):
        for v in (np.ones(5), greville(bt)):
            assert np.abs(pen @ np.kron(u, v)).max() < 1e-8 * scale


def test_tensor_penalty_is_psd():
    bs = BSplineBasis((0.0, 1.0), 5)
    pen = tensor_penalty(bs.penalty(), bs.penalty())
    rng = np.random.default_rng(2)
    for _ in range(25):
        x = rng.normal(size=25)
        assert x @ pen @ x > -1e-10 * np.abs(pen).max()


def test_ff_weight_vector_integrates_the_curve():
    # Row sums of the basis are 1, so sum(a) equals the quadrature integral.
    grid = uniform_grid(0.0, 10.0, 41)
    w = quadrature_weights(grid)
    bs = BSplineBasis((0.0, 10.0), 8)
    x = np.ones(41)
    a = ff_weight_vector(x, grid.points, w, bs)
    assert a.shape == (8,)
    assert abs(a.sum() - 10.0) < 1e-10
    with pytest.raises(DimensionError):
        ff_weight_vector(x[:-1], grid.points, w, bs)


def test_ff_rows_contract_a_constant_surface_to_the_integral():
    s_grid = uniform_grid(0.0, 10.0, 41)
    w = quadrature_weights(s_grid)
    bs = BSplineBasis((0.0, 10.0), 8)
    bt = BSplineBasis((0.0, 10.0), 8)
    x = FunctionalSample(s_grid, np.ones(41))
    rows = ff_design_rows(x, w, bs, bt, np.linspace(0.0, 10.0, 13))
    assert rows.shape == (13, 64)
    # surface identically 0.5 -> 0.5 * integral of X, the same at every t
    np.testing.assert_allclose(rows @ np.full(64, 0.5), np.full(13, 5.0),
                               atol=1e-10)


def test_ff_rows_are_linear_in_the_curve():
    rng = np.random.default_rng(9)
    s_grid = uniform_grid(0.0, 1.0, 21)
    w = quadrature_weights(s_grid)
    bs = BSplineBasis((0.0, 1.0), 5)
    bt = BSplineBasis((0.0, 1.0), 4)
    t_eval = np.linspace(0, 1, 7)
    xa = rng.normal(size=21)
    xb = rng.normal(size=21)
    ra = ff_design_rows(FunctionalSample(s_grid, xa), w, bs, bt, t_eval)
    rb = ff_design_rows(FunctionalSample(s_grid, xb), w, bs, bt, t_eval)
    rab = ff_design_rows(FunctionalSample(s_grid, xa + xb), w, bs, bt, t_eval)
    np.testing.assert_allclose(rab, ra + rb, atol=1e-12)

    zero = ff_design_rows(FunctionalSample(s_grid, np.zeros(21)), w, bs, bt,
                          t_eval)
    assert np.abs(zero).max() == 0.0
