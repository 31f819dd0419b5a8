import numpy as np
import pytest
from scipy.special import expit, logit

from fregmice.basis import BSplineBasis
from fregmice.errors import DataError, DimensionError, RankError, SeparationWarning
from fregmice.penreg import (DesignBlock, fit_bernoulli, fit_gaussian,
                             fit_gaussian_ne, reml_profile)


def spline_block(x, n_basis=10, label="s", domain=(0.0, 1.0)):
    basis = BSplineBasis(domain, n_basis)
    return DesignBlock(label, basis.eval(x), basis.penalty())


def test_lambda_zero_reproduces_least_squares():
    rng = np.random.default_rng(0)
    n = 120
    x = np.sort(rng.uniform(0, 1, n))
    z = rng.normal(size=(n, 3))
    blocks = [DesignBlock("z", z), spline_block(x)]
    y = rng.normal(size=n)
    fit = fit_gaussian(y, blocks, lambdas=0.0)
    design = np.hstack([z, blocks[1].columns])
    ref, *_ = np.linalg.lstsq(design, y, rcond=None)
    assert np.abs(fit.coefficients - ref).max() < 1e-8


def test_unpenalized_fit_matches_textbook_ols():
    rng = np.random.default_rng(1)
    n, p = 80, 4
    x = rng.normal(size=(n, p))
    y = x @ np.array([1.0, -2.0, 0.5, 0.0]) + 0.3 * rng.normal(size=n)
    fit = fit_gaussian(y, [DesignBlock("x", x)])
    xtx_inv = np.linalg.inv(x.T @ x)
    beta = xtx_inv @ x.T @ y
    rss = float(((y - x @ beta) ** 2).sum())
    np.testing.assert_allclose(fit.coefficients, beta, atol=1e-10)
    assert abs(fit.edf - p) < 1e-8
    assert abs(fit.rss - rss) < 1e-8
    assert abs(fit.dispersion - rss / (n - p)) < 1e-10
    np.testing.assert_allclose(fit.posterior_cov, xtx_inv * rss / (n - p),
                               rtol=1e-8, atol=1e-12)


def test_affine_response_is_reproduced_at_every_lambda():
    # straight-line data lie in the penalty null space: no shrinkage at all
    rng = np.random.default_rng(2)
    x = np.sort(rng.uniform(0, 1, 90))
    y = 2.0 * x + 1.0
    block = spline_block(x, n_basis=9)
    for lam in (0.0, 1.0, 1e4, 1e8):
        fit = fit_gaussian(y, [block], lambdas=lam)
        fitted = block.columns @ fit.coefficients
        assert np.abs(fitted - y).max() < 1e-6, lam


def test_huge_lambda_collapses_to_the_least_squares_line():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n = 70
        x = np.sort(rng.uniform(0, 1, n))
        y = np.sin(6 * x) + 0.2 * rng.normal(size=n)
        block = spline_block(x, n_basis=12)
        fit = fit_gaussian(y, [block], lambdas=1e12)
        fitted = block.columns @ fit.coefficients
        slope, intercept = np.polyfit(x, y, 1)
        assert np.abs(fitted - (slope * x + intercept)).max() < 1e-6
        assert fit.edf < 2.0 + 1e-6


def test_edf_decreases_with_lambda():
    rng = np.random.default_rng(3)
    x = np.sort(rng.uniform(0, 1, 100))
    y = np.sin(6 * x) + 0.1 * rng.normal(size=100)
    block = spline_block(x, n_basis=12)
    edfs = [fit_gaussian(y, [block], lambdas=lam).edf
            for lam in (0.0, 1e-4, 1e-2, 1.0, 1e2, 1e6, 1e12)]
    assert abs(edfs[0] - 12) < 1e-6
    assert all(a >= b - 1e-9 for a, b in zip(edfs, edfs[1:]))
    assert edfs[-1] >= 2.0 - 1e-9


def test_residuals_orthogonal_to_unpenalized_columns():
    rng = np.random.default_rng(4)
    n = 150
    x = np.sort(rng.uniform(0, 1, n))
    z = rng.normal(size=(n, 2))
    y = z @ np.array([1.0, -1.0]) + np.sin(5 * x) + 0.2 * rng.normal(size=n)
    blocks = [DesignBlock("z", z), spline_block(x, n_basis=10)]
    fit = fit_gaussian(y, blocks, lambdas={"s": 10.0})
    resid = y - np.hstack([b.columns for b in blocks]) @ fit.coefficients
    assert np.abs(z.T @ resid).max() < 1e-8 * n


def test_reml_prefers_heavy_smoothing_on_pure_noise():
    grid = np.arange(-4.0, 9.0)
    n = 60
    wins = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        x = np.sort(rng.uniform(0, 1, n))
        y = rng.standard_normal(n)
        prof = reml_profile(y, [spline_block(x, n_basis=10)], grid)
        assert np.all(np.isfinite(prof))
        if int(np.argmin(prof)) == len(grid) - 1:
            wins += 1
    assert wins > 25


def test_reml_keeps_wiggle_room_for_a_real_signal():
    rng = np.random.default_rng(12)
    n = 200
    x = np.sort(rng.uniform(0, 1, n))
    y = np.sin(4 * np.pi * x) + 0.1 * rng.normal(size=n)
    block = spline_block(x, n_basis=12)
    prof = reml_profile(y, [block], np.arange(-4.0, 9.0))
    assert int(np.argmin(prof)) < 12
    fit = fit_gaussian(y, [block])                  # REML-selected lambda
    assert fit.edf > 2.0
    fitted = block.columns @ fit.coefficients
    assert np.abs(fitted - np.sin(4 * np.pi * x)).max() < 0.25


def test_duplicating_every_row_rescales_the_covariance_exactly():
    rng = np.random.default_rng(5)
    n, p = 60, 4
    x = rng.normal(size=(n, p))
    y = x @ np.arange(1.0, 5.0) + rng.normal(size=n)
    one = fit_gaussian(y, [DesignBlock("x", x)])
    two = fit_gaussian(np.concatenate([y, y]),
                       [DesignBlock("x", np.vstack([x, x]))])
    np.testing.assert_allclose(two.coefficients, one.coefficients, atol=1e-10)
    np.testing.assert_allclose(two.posterior_cov,
                               one.posterior_cov * (n - p) / (2 * n - p),
                               rtol=1e-8)


def test_posterior_cov_is_symmetric_psd():
    rng = np.random.default_rng(6)
    x = np.sort(rng.uniform(0, 1, 80))
    y = np.cos(3 * x) + 0.3 * rng.normal(size=80)
    fit = fit_gaussian(y, [spline_block(x, n_basis=8)])
    cov = fit.posterior_cov
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() > -1e-10


def test_block_accessors_and_lambda_bookkeeping():
    rng = np.random.default_rng(7)
    x = np.sort(rng.uniform(0, 1, 50))
    z = rng.normal(size=(50, 2))
    blocks = [DesignBlock("z", z), spline_block(x, n_basis=6)]
    fit = fit_gaussian(rng.normal(size=50), blocks, lambdas={"s": 3.0})
    assert fit.block_coefficients("z").shape == (2,)
    assert fit.block_coefficients("s").shape == (6,)
    assert fit.block_cov("s").shape == (6, 6)
    assert fit.lambdas == {"z": 0.0, "s": 3.0}
    assert fit.family == "gaussian"
    assert fit.n_obs == 50


def test_normal_equation_entry_point_agrees_with_the_design_path():
    rng = np.random.default_rng(8)
    x = np.sort(rng.uniform(0, 1, 70))
    block = spline_block(x, n_basis=7)
    y = np.sin(3 * x) + 0.2 * rng.normal(size=70)
    a = fit_gaussian(y, [block], lambdas=2.0)
    b = fit_gaussian_ne(block.columns.T @ block.columns, block.columns.T @ y,
                        float(y @ y), 70, [("s", 7, block.penalty)], lambdas=2.0)
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-10)
    np.testing.assert_allclose(a.posterior_cov, b.posterior_cov, atol=1e-10)


def test_deterministic_given_identical_inputs():
    rng = np.random.default_rng(9)
    x = np.sort(rng.uniform(0, 1, 60))
    y = np.sin(2 * x) + 0.1 * rng.normal(size=60)
    block = spline_block(x, n_basis=8)
    a = fit_gaussian(y, [block])
    b = fit_gaussian(y, [block])
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    assert a.lambdas == b.lambdas


def test_input_validation():
    rng = np.random.default_rng(10)
    x = np.sort(rng.uniform(0, 1, 30))
    block = spline_block(x, n_basis=6)
    y = rng.normal(size=30)
    with pytest.raises(DataError):
        fit_gaussian(y, [block], lambdas=-1.0)
    with pytest.raises(DataError):
        fit_gaussian(np.r_[y[:-1], np.nan], [block])
    with pytest.raises(DimensionError):
        fit_gaussian(y[:-1], [block])
    with pytest.raises(DataError):
        fit_gaussian(y, [block, spline_block(x, n_basis=4, label="s")])
    with pytest.raises(DataError):
        fit_gaussian(y, [])
    with pytest.raises(RankError):
        fit_gaussian(rng.normal(size=5), [DesignBlock("w", rng.normal(size=(5, 9)))])


def test_bernoulli_intercept_only_equals_the_sample_logit():
    rng = np.random.default_rng(11)
    y = (rng.random(400) < 0.37).astype(float)
    fit = fit_bernoulli(y, [DesignBlock("c", np.ones((400, 1)))])
    assert abs(fit.coefficients[0] - logit(y.mean())) < 1e-6
    assert fit.family == "bernoulli"


def test_bernoulli_recovers_a_logistic_slope():
    rng = np.random.default_rng(13)
    n = 5000
    x = rng.normal(size=n)
    y = (rng.random(n) < expit(1.0 * x - 0.5)).astype(float)
    design = np.column_stack([np.ones(n), x])
    fit = fit_bernoulli(y, [DesignBlock("d", design)])
    assert abs(fit.coefficients[1] - 1.0) < 0.15
    assert abs(fit.coefficients[0] + 0.5) < 0.15
    assert fit.posterior_cov[1, 1] > 0


def test_bernoulli_validation_and_separation_warning():
    with pytest.raises(DataError):
        fit_bernoulli(np.array([0.0, 2.0]), [DesignBlock("c", np.ones((2, 1)))])
    with pytest.raises(DataError):
        fit_bernoulli(np.zeros(5), [DesignBlock("c", np.ones((5, 1)))])

    x = np.r_[np.linspace(-3, -1, 20), np.linspace(1, 3, 20)]
    y = (x > 0).astype(float)
    design = np.column_stack([np.ones(40), x])
    with pytest.warns(SeparationWarning):
        fit = fit_bernoulli(y, [DesignBlock("d", design)])
    assert any("separation" in w for w in fit.warnings)
