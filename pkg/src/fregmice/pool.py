"""Pooling estimates across the M imputed-data fits (Rubin's Rules, extended).

For a coefficient function expanded in a shared basis, pooling happens at the
coefficient level: b_bar is the mean of the M coefficient vectors, Lambda_bar
the mean within-fit covariance block, Omega_bar the between-fit sample
covariance (outer-product form; zero by convention at M=1). Pointwise bands
follow from the quadratic form

    var(t) = B(t)' [Lambda_bar + (1 + 1/M) Omega_bar] B(t)

which is algebraically the classical scalar Rubin's Rules applied at every t —
that identity is the module's central invariant and is what the tests pin.

Scalar coefficients use the classical rules directly. Intervals use the normal
quantile by default; a t-quantile with Rubin's degrees of freedom is available
behind a flag.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .basis import BSplineBasis
from .errors import ConfigError, IncompatibilityError

DEFAULT_LEVEL = 0.95


@dataclass(frozen=True, eq=False)
class PooledCoefficient:
    basis: BSplineBasis
    estimate: np.ndarray        # b_bar, (L,)
    within: np.ndarray          # Lambda_bar, (L, L)
    between: np.ndarray         # Omega_bar, (L, L)
    m: int

    def __post_init__(self):
        L = self.basis.n_basis
        if self.estimate.shape != (L,) or self.within.shape != (L, L) \
                or self.between.shape != (L, L):
            raise IncompatibilityError("pooled pieces do not match the basis size")

    def total_cov(self) -> np.ndarray:
        return self.within + (1.0 + 1.0 / self.m) * self.between


def pool_coefficients(basis: BSplineBasis, coefficients, covariances) -> PooledCoefficient:
    """Pool M coefficient vectors and their covariance blocks over one basis."""
    coefs = np.asarray(coefficients, dtype=float)
    covs = np.asarray(covariances, dtype=float)
    m = coefs.shape[0]
    if m < 1:
        raise ConfigError("need at least one fit to pool")
    if covs.shape[0] != m:
        raise IncompatibilityError("coefficient and covariance counts differ")
    b_bar = coefs.mean(axis=0)
    lam_bar = covs.mean(axis=0)
    if m == 1:
        omega = np.zeros_like(lam_bar)
    else:
        dev = coefs - b_bar
        omega = dev.T @ dev / (m - 1)
    return PooledCoefficient(basis=basis, estimate=b_bar, within=lam_bar,
                             between=omega, m=m)


def _term_pieces(fit, term: str):
    """(basis, coefficients, covariance block) of a named term on any fit
    object that exposes block_coefficients/block_cov plus a basis lookup."""
    from .frm import FrmFit
    from .srm import SrmFit
    if isinstance(fit, FrmFit):
        if term in fit.spec.ff_terms:
            raise IncompatibilityError(
                f"term {term!r} has a bivariate surface; pool its basis "
                "coefficients directly"
            )
        basis = fit.basis
    elif isinstance(fit, SrmFit):
        if term not in fit.bases:
            raise IncompatibilityError(f"term {term!r} has no coefficient function")
        basis = fit.bases[term]
    else:
        raise IncompatibilityError(f"cannot pool fits of type {type(fit).__name__}")
    return basis, fit.fit.block_coefficients(term), fit.fit.block_cov(term)


def pool_functional(fits, term: str) -> PooledCoefficient:
    """Pool one coefficient function across M model fits on imputed datasets."""
    if not fits:
        raise ConfigError("need at least one fit to pool")
    bases, coefs, covs = [], [], []
    for fit in fits:
        basis, b, lam = _term_pieces(fit, term)
        bases.append(basis)
        coefs.append(b)
        covs.append(lam)
    first = bases[0]
    for other in bases[1:]:
        if other != first:
            raise IncompatibilityError(
                f"fits disagree on the basis for term {term!r}"
            )
    return pool_coefficients(first, np.vstack(coefs), np.stack(covs))


def _interval_quantile(level: float, m: int, use_t: bool,
                       within: float, between: float) -> float:
    if not 0.0 < level < 1.0:
        raise ConfigError("interval level must lie in (0, 1)")
    p = 0.5 * (1.0 + level)
    if not use_t or m < 2 or between <= 0.0:
        return float(stats.norm.ppf(p))
    r = (1.0 + 1.0 / m) * between / within if within > 0 else np.inf
    df = (m - 1) * (1.0 + 1.0 / r) ** 2
    return float(stats.t.ppf(p, df))


def pooled_band(pooled: PooledCoefficient, eval_grid, level: float = DEFAULT_LEVEL,
                use_t: bool = False):
    """Pointwise (estimate, lower, upper, se) of a pooled coefficient function."""
    pts = np.asarray(eval_grid, dtype=float)
    B = pooled.basis.eval(pts)
    est = B @ pooled.estimate
    total = pooled.total_cov()
    var = np.einsum("ij,jk,ik->i", B, total, B)
    var = np.maximum(var, 0.0)
    se = np.sqrt(var)
    if use_t:
        win = np.einsum("ij,jk,ik->i", B, pooled.within, B)
        btw = np.einsum("ij,jk,ik->i", B, pooled.between, B)
        q = np.array([_interval_quantile(level, pooled.m, True, w, b)
                      for w, b in zip(win, btw)])
    else:
        q = _interval_quantile(level, pooled.m, False, 1.0, 0.0)
    return est, est - q * se, est + q * se, se


def pool_scalar(estimates, variances, level: float = DEFAULT_LEVEL,
                use_t: bool = False):
    """Classical Rubin's Rules: (pooled, total_var, ci_lo, ci_hi)."""
    est = np.asarray(estimates, dtype=float)
    var = np.asarray(variances, dtype=float)
    if est.size < 1 or est.shape != var.shape:
        raise ConfigError("need equally many estimates and variances, at least one")
    if np.any(var < 0):
        raise ConfigError("variances must be non-negative")
    m = est.size
    pooled = float(est.mean())
    within = float(var.mean())
    between = float(est.var(ddof=1)) if m > 1 else 0.0
    total = within + (1.0 + 1.0 / m) * between
    q = _interval_quantile(level, m, use_t, within, between)
    half = q * float(np.sqrt(total))
    return pooled, total, pooled - half, pooled + half
