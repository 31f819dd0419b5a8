"""Cubic B-spline bases, second-derivative penalties, and design-row builders.

All coefficient functions are represented in clamped cubic B-spline bases with
equally spaced knots; bivariate surfaces use tensor products of two such bases.
The roughness penalty is D = ∫ B″(t)B″(t)ᵀ dt, computed by trapezoid quadrature
on a 10× refined uniform grid (B″ of a cubic spline is piecewise linear, so
with knots on the refined grid this is essentially exact).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import DimensionError, DomainError, InvalidGridError

_DEGREE = 3  # cubic everywhere


@dataclass(frozen=True, eq=False)
class BSplineBasis:
    """Clamped cubic B-spline basis with equally spaced interior knots."""

    domain: tuple[float, float]
    n_basis: int
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a, b = float(self.domain[0]), float(self.domain[1])
        if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
            raise InvalidGridError(f"bad basis domain [{a}, {b}]")
        if self.n_basis < 4:
            raise InvalidGridError("cubic B-spline basis needs at least 4 functions")
        object.__setattr__(self, "domain", (a, b))
        # n_basis + degree + 1 knots: boundary knots repeated degree+1 times,
        # interior knots equally spaced strictly inside (a, b).
        inner = np.linspace(a, b, self.n_basis - _DEGREE + 1)
        knots = np.concatenate([np.repeat(a, _DEGREE), inner, np.repeat(b, _DEGREE)])
        knots.flags.writeable = False
        object.__setattr__(self, "knots", knots)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BSplineBasis)
            and self.n_basis == other.n_basis
            and np.allclose(self.domain, other.domain)
        )

    def __hash__(self):
        return hash((self.domain, self.n_basis))

    @property
    def n_spans(self) -> int:
        return self.n_basis - _DEGREE

    def eval(self, points) -> np.ndarray:
        """Design matrix (|points| × L); rows sum to 1 (partition of unity)."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        a, b = self.domain
        tol = 1e-8 * (b - a)
        if np.any(pts < a - tol) or np.any(pts > b + tol):
            raise DomainError(
                f"evaluation point outside basis domain [{a}, {b}]"
            )
        pts = np.clip(pts, a, b)
        return BSpline.design_matrix(pts, self.knots, _DEGREE).toarray()

    def eval_deriv2(self, points) -> np.ndarray:
        """Second-derivative design matrix (|points| × L)."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        spl = BSpline(self.knots, np.eye(self.n_basis), _DEGREE, extrapolate=True)
        return spl.derivative(2)(np.clip(pts, *self.domain))

    def penalty(self) -> np.ndarray:
        """Second-derivative penalty D = ∫ B″B″ᵀ dt (symmetric PSD, rank L−2)."""
        a, b = self.domain
        fine = np.linspace(a, b, 10 * self.n_spans + 1)
        d2 = self.eval_deriv2(fine)
        w = np.zeros(fine.size)
        gaps = np.diff(fine)
        w[:-1] += gaps / 2.0
        w[1:] += gaps / 2.0
        pen = d2.T @ (d2 * w[:, None])
        return (pen + pen.T) / 2.0


def expand_with_se(basis: BSplineBasis, coefficients: np.ndarray,
                   cov_block: np.ndarray, points) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate B(t)ᵀb and the pointwise se sqrt(B(t)ᵀ Σ B(t))."""
    bmat = basis.eval(points)
    if coefficients.size != basis.n_basis:
        raise DimensionError("coefficient length does not match basis size")
    est = bmat @ coefficients
    var = np.einsum("tl,lm,tm->t", bmat, cov_block, bmat)
    return est, np.sqrt(np.clip(var, 0.0, None))


def tensor_penalty(pen_s: np.ndarray, pen_t: np.ndarray) -> np.ndarray:
    """Isotropic tensor-product penalty D_s ⊗ I + I ⊗ D_t (s-major ordering)."""
    ls, lt = pen_s.shape[0], pen_t.shape[0]
    return np.kron(pen_s, np.eye(lt)) + np.kron(np.eye(ls), pen_t)


def ff_weight_vector(x_values, s_points, s_weights, basis_s: BSplineBasis) -> np.ndarray:
    """The length-Ls vector a with a_u = Σ_d Δ_d X(s_d) Bs_u(s_d)."""
    vals = getattr(x_values, "values", x_values)
    vals = np.asarray(vals, dtype=float)
    s_points = np.asarray(s_points, dtype=float)
    s_weights = np.asarray(s_weights, dtype=float)
    if vals.ndim != 1 or vals.size != s_weights.size or vals.size != s_points.size:
        raise DimensionError("X values, s-grid points, and weights disagree in length")
    return (s_weights * vals) @ basis_s.eval(s_points)


def ff_design_rows(x_sample, s_weights: np.ndarray, basis_s: BSplineBasis,
                   basis_t: BSplineBasis, t_eval) -> np.ndarray:
    """Design rows for a function-on-function term at the points `t_eval`.

    The bivariate surface ρ(s,t) is the tensor product Bs(s) ⊗ Bt(t) with
    s-major coefficient ordering; the quadrature-approximated integral
    ∫ X(s) ρ(s,t) ds contributes, for each evaluation point t, the row
    (Σ_d Δ_d X(s_d) Bs(s_d)) ⊗ Bt(t).

    `x_sample` is a FunctionalSample on the s-grid matching `s_weights`.
    """
    a = ff_weight_vector(x_sample.values, x_sample.grid.points, s_weights, basis_s)
    bt = basis_t.eval(t_eval)
    return np.einsum("u,tv->tuv", a, bt).reshape(bt.shape[0], a.size * bt.shape[1])
