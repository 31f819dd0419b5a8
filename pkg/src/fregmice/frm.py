"""Functional-response regression: Y_i(t) ~ scalar covariates + functional covariates.

The model is

    Y_i(t) = beta_0(t) + sum_j z_ij beta_j(t) + sum_k int X_ik(s) rho_k(s, t) ds + e_i(t)

with every coefficient function expanded in a cubic B-spline basis over the
response grid's domain (surfaces in a tensor product of two such bases) and a
second-derivative roughness penalty on every term, the intercept included.
Fitting stacks all curves on the shared response grid — rows ordered subject-
major, grid-point-minor — and runs penalized least squares with REML-selected
smoothing.

When the model has no functional covariates the design has exact Kronecker
structure and the normal equations are assembled as Z'Z (x) B'B without ever
materializing the (n*G, P*L) design; that path is algebraically identical to
the explicit one and is what makes repeated fits inside the imputation engine
cheap.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BSplineBasis, expand_with_se, ff_design_rows, tensor_penalty
from .dataset import MixedDataset
from .errors import (ConfigError, DataError, IncompleteDataError,
                     InsufficientDataError)
from .fdgrid import FunctionalSample, Grid, quadrature_weights
from .penreg import DesignBlock, PenalizedFit, fit_gaussian, fit_gaussian_ne

DEFAULT_N_BASIS = 20
DEFAULT_FF_BASIS = (8, 8)


@dataclass(frozen=True)
class FrmSpec:
    """Declares a functional-response model: response, terms, basis sizes."""

    response: str
    scalar_terms: tuple[str, ...] = ()
    ff_terms: tuple[str, ...] = ()
    intercept: bool = True
    n_basis: int = DEFAULT_N_BASIS
    ff_basis: tuple[int, int] = DEFAULT_FF_BASIS

    def __post_init__(self):
        object.__setattr__(self, "scalar_terms", tuple(self.scalar_terms))
        object.__setattr__(self, "ff_terms", tuple(self.ff_terms))
        object.__setattr__(self, "ff_basis", tuple(self.ff_basis))
        names = [self.response, *self.scalar_terms, *self.ff_terms]
        if len(set(names)) != len(names):
            raise ConfigError("model terms and response must be distinct")
        if self.n_basis < 4:
            raise ConfigError("n_basis must be at least 4 (cubic splines)")
        if len(self.ff_basis) != 2 or min(self.ff_basis) < 4:
            raise ConfigError("ff_basis must be two sizes, each at least 4")

    @property
    def term_labels(self) -> tuple[str, ...]:
        labels = ("intercept",) if self.intercept else ()
        return labels + self.scalar_terms + self.ff_terms

    def to_dict(self) -> dict:
        return {
            "model": "frm",
            "response": self.response,
            "scalar_terms": list(self.scalar_terms),
            "ff_terms": list(self.ff_terms),
            "intercept": self.intercept,
            "n_basis": self.n_basis,
            "ff_basis": list(self.ff_basis),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FrmSpec":
        return cls(
            response=obj["response"],
            scalar_terms=tuple(obj.get("scalar_terms", ())),
            ff_terms=tuple(obj.get("ff_terms", ())),
            intercept=bool(obj.get("intercept", True)),
            n_basis=int(obj.get("n_basis", DEFAULT_N_BASIS)),
            ff_basis=tuple(obj.get("ff_basis", DEFAULT_FF_BASIS)),
        )


@dataclass
class FrmFit:
    spec: FrmSpec
    grid: Grid
    basis: BSplineBasis
    fit: PenalizedFit
    ff_bases: dict[str, tuple[BSplineBasis, BSplineBasis]] = field(default_factory=dict)
    ff_grids: dict[str, Grid] = field(default_factory=dict)

    @property
    def term_labels(self) -> tuple[str, ...]:
        return self.spec.term_labels

    def to_dict(self) -> dict:
        terms = []
        for label in self.term_labels:
            entry: dict = {"name": label,
                           "coefficients": self.fit.block_coefficients(label).tolist()}
            if label in self.spec.ff_terms:
                bs, bt = self.ff_bases[label]
                entry["basis_s"] = {"domain": list(bs.domain), "n_basis": bs.n_basis}
                entry["basis_t"] = {"domain": list(bt.domain), "n_basis": bt.n_basis}
                entry["grid_s"] = [float(v) for v in self.ff_grids[label].points]
            else:
                entry["basis"] = {"domain": list(self.basis.domain),
                                  "n_basis": self.basis.n_basis}
            terms.append(entry)
        return {
            "model": "frm",
            "family": "gaussian",
            "response": self.spec.response,
            "grid": [float(v) for v in self.grid.points],
            "intercept": self.spec.intercept,
            "terms": terms,
            "posterior_cov": self.fit.posterior_cov.tolist(),
            "dispersion": self.fit.dispersion,
            "edf": self.fit.edf,
            "lambdas": self.fit.lambdas,
            "n_obs": self.fit.n_obs,
            "warnings": list(self.fit.warnings),
        }


def _require_complete(data: MixedDataset, names) -> None:
    for name in names:
        col = data.column(name)
        if not col.observed.all():
            raise IncompleteDataError(
                f"column {name!r} has {col.n_missing} missing rows; "
                "model fitting requires complete data"
            )


def _scalar_matrix(data: MixedDataset, spec: FrmSpec) -> tuple[np.ndarray, list[str]]:
    cols, labels = [], []
    if spec.intercept:
        cols.append(np.ones(data.n))
        labels.append("intercept")
    for name in spec.scalar_terms:
        col = data.column(name)
        if col.kind == "functional":
            raise DataError(f"scalar term {name!r} refers to a functional column")
        cols.append(col.values)
        labels.append(name)
    Z = np.column_stack(cols) if cols else np.empty((data.n, 0))
    return Z, labels


def fit_frm(data: MixedDataset, spec: FrmSpec, lambdas=None) -> FrmFit:
    """Fit a functional-response model on fully observed rows of `data`."""
    resp = data.column(spec.response)
    if resp.kind != "functional":
        raise DataError(f"response {spec.response!r} must be a functional column")
    used = [spec.response, *spec.scalar_terms, *spec.ff_terms]
    _require_complete(data, used)
    n = data.n
    if n < 2:
        raise InsufficientDataError("need at least 2 rows to fit")

    grid = resp.grid
    basis_t = BSplineBasis(grid.domain, spec.n_basis)
    pen_t = basis_t.penalty()
    Z, z_labels = _scalar_matrix(data, spec)
    Y = resp.values

    if not spec.ff_terms:
        # Kronecker route: X = Z (x) B row-for-row, so
        #   X'X = Z'Z (x) B'B   and   X'y = vec(Z' Y B)  (term-major layout).
        B = basis_t.eval(grid.points)
        btb = B.T @ B
        xtx = np.kron(Z.T @ Z, btb)
        xty = (Z.T @ Y @ B).ravel()
        yty = float(np.sum(Y * Y))
        metas = [(label, basis_t.n_basis, pen_t) for label in z_labels]
        fit = fit_gaussian_ne(xtx, xty, yty, n * len(grid), metas, lambdas=lambdas)
        return FrmFit(spec=spec, grid=grid, basis=basis_t, fit=fit)

    # Explicit long design: one row per (subject, grid point), subject-major.
    G = len(grid)
    B_long = np.tile(basis_t.eval(grid.points), (n, 1))
    blocks: list[DesignBlock] = []
    for j, label in enumerate(z_labels):
        cols = B_long * np.repeat(Z[:, j], G)[:, None]
        blocks.append(DesignBlock(label, cols, pen_t))
    ff_bases: dict[str, tuple[BSplineBasis, BSplineBasis]] = {}
    ff_grids: dict[str, Grid] = {}
    for name in spec.ff_terms:
        col = data.column(name)
        if col.kind != "functional":
            raise DataError(f"ff term {name!r} refers to a scalar column")
        bs = BSplineBasis(col.grid.domain, spec.ff_basis[0])
        bt = BSplineBasis(grid.domain, spec.ff_basis[1])
        ff_bases[name] = (bs, bt)
        ff_grids[name] = col.grid
        sw = quadrature_weights(col.grid)
        rows = np.vstack([
            ff_design_rows(FunctionalSample(col.grid, col.values[i]), sw, bs, bt,
                           grid.points)
            for i in range(n)
        ])
        blocks.append(DesignBlock(name, rows, tensor_penalty(bs.penalty(), bt.penalty())))
    fit = fit_gaussian(Y.ravel(), blocks, lambdas=lambdas)
    return FrmFit(spec=spec, grid=grid, basis=basis_t, fit=fit,
                  ff_bases=ff_bases, ff_grids=ff_grids)


def predict_frm(fit: FrmFit, data: MixedDataset) -> np.ndarray:
    """Fitted mean curves on the response grid, one row per dataset row."""
    spec = fit.spec
    for name in (*spec.scalar_terms, *spec.ff_terms):
        col = data.column(name)
        if not col.observed.all():
            raise IncompleteDataError(f"predictor {name!r} has missing rows")
    Z, z_labels = _scalar_matrix(data, spec)
    B = fit.basis.eval(fit.grid.points)
    mu = np.zeros((data.n, len(fit.grid)))
    if z_labels:
        theta = np.vstack([fit.fit.block_coefficients(lbl) for lbl in z_labels])
        mu += Z @ theta @ B.T
    for name in spec.ff_terms:
        col = data.column(name)
        if fit.ff_grids[name] != col.grid:
            raise DataError(f"ff term {name!r}: grid differs from the fitted one")
        bs, bt = fit.ff_bases[name]
        sw = quadrature_weights(col.grid)
        Bs = bs.eval(col.grid.points)
        A = (col.values * sw) @ Bs                      # (n, Ls)
        U = fit.fit.block_coefficients(name).reshape(bs.n_basis, bt.n_basis)
        mu += A @ U @ bt.eval(fit.grid.points).T
    return mu


def residual_curves(fit: FrmFit, data: MixedDataset) -> np.ndarray:
    resp = data.column(fit.spec.response)
    if not resp.observed.all():
        raise IncompleteDataError(f"response {fit.spec.response!r} has missing rows")
    if resp.grid != fit.grid:
        raise DataError("response grid differs from the fitted one")
    return resp.values - predict_frm(fit, data)


def coefficient_function(fit: FrmFit, term: str, points=None):
    """(estimate, pointwise se) of a univariate coefficient function.

    Applies to the intercept and scalar-covariate terms; functional-covariate
    terms have bivariate surfaces (see `coefficient_surface`).
    """
    if term not in fit.term_labels:
        raise DataError(f"unknown term {term!r}")
    if term in fit.spec.ff_terms:
        raise DataError(f"term {term!r} has a bivariate coefficient surface")
    pts = fit.grid.points if points is None else np.asarray(points, dtype=float)
    return expand_with_se(fit.basis, fit.fit.block_coefficients(term),
                          fit.fit.block_cov(term), pts)


def coefficient_surface(fit: FrmFit, term: str, s_points=None, t_points=None) -> np.ndarray:
    """Estimated surface rho(s, t) of a functional-covariate term."""
    if term not in fit.spec.ff_terms:
        raise DataError(f"term {term!r} is not a functional-covariate term")
    bs, bt = fit.ff_bases[term]
    s = fit.ff_grids[term].points if s_points is None else np.asarray(s_points, dtype=float)
    t = fit.grid.points if t_points is None else np.asarray(t_points, dtype=float)
    U = fit.fit.block_coefficients(term).reshape(bs.n_basis, bt.n_basis)
    return bs.eval(s) @ U @ bt.eval(t).T
