"""Scalar-response regression with functional covariates through FPCA scores.

The model is

    g(E[y_i]) = alpha + sum_j theta_j z_ij + sum_k int X_ik(s) beta_k(s) ds

with g identity (gaussian) or logit (bernoulli). Each functional covariate is
replaced by its FPCA score vector at a fixed explained-variance level; writing
beta_k in a penalized B-spline basis turns the integral into scores @ G_k where
G_k[u, v] = int psi_u(s) b_v(s) ds (quadrature on the covariate's grid). Since
training scores are exactly mean-centered, the functional design blocks carry
no intercept leakage; the absorbed int mu(s) beta_k(s) ds lives in the
intercept, and prediction projects new curves onto the stored decomposition so
the same absorption applies.

Scalar terms and the intercept are unpenalized; each beta_k gets the usual
second-derivative penalty with REML-selected smoothing.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BSplineBasis, expand_with_se
from .dataset import MixedDataset
from .errors import ConfigError, DataError, IncompleteDataError
from .fdgrid import quadrature_weights
from .fpca import FpcaDecomposition, fit_fpca, project_scores
from .penreg import (DesignBlock, PenalizedFit, fit_bernoulli, fit_gaussian)

DEFAULT_N_BASIS = 30
DEFAULT_PVE = 0.99
FAMILIES = ("gaussian", "bernoulli")


@dataclass(frozen=True)
class SrmSpec:
    response: str
    scalar_terms: tuple[str, ...] = ()
    functional_terms: tuple[str, ...] = ()
    family: str = "gaussian"
    intercept: bool = True
    n_basis: int = DEFAULT_N_BASIS
    pve: float = DEFAULT_PVE

    def __post_init__(self):
        object.__setattr__(self, "scalar_terms", tuple(self.scalar_terms))
        object.__setattr__(self, "functional_terms", tuple(self.functional_terms))
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        names = [self.response, *self.scalar_terms, *self.functional_terms]
        if len(set(names)) != len(names):
            raise ConfigError("model terms and response must be distinct")
        if self.n_basis < 4:
            raise ConfigError("n_basis must be at least 4 (cubic splines)")
        if not 0.0 < self.pve <= 1.0:
            raise ConfigError("pve must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "model": "srm",
            "response": self.response,
            "scalar_terms": list(self.scalar_terms),
            "functional_terms": list(self.functional_terms),
            "family": self.family,
            "intercept": self.intercept,
            "n_basis": self.n_basis,
            "pve": self.pve,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SrmSpec":
        return cls(
            response=obj["response"],
            scalar_terms=tuple(obj.get("scalar_terms", ())),
            functional_terms=tuple(obj.get("functional_terms", ())),
            family=obj.get("family", "gaussian"),
            intercept=bool(obj.get("intercept", True)),
            n_basis=int(obj.get("n_basis", DEFAULT_N_BASIS)),
            pve=float(obj.get("pve", DEFAULT_PVE)),
        )


@dataclass
class SrmFit:
    spec: SrmSpec
    fit: PenalizedFit
    decompositions: dict[str, FpcaDecomposition] = field(default_factory=dict)
    score_maps: dict[str, np.ndarray] = field(default_factory=dict)   # G_k: (K, L)
    bases: dict[str, BSplineBasis] = field(default_factory=dict)
    dropped_terms: tuple[str, ...] = ()

    @property
    def term_labels(self) -> tuple[str, ...]:
        labels = ("intercept",) if self.spec.intercept else ()
        labels += self.spec.scalar_terms
        return labels + tuple(t for t in self.spec.functional_terms
                              if t not in self.dropped_terms)

    def to_dict(self) -> dict:
        terms = []
        for label in self.term_labels:
            entry: dict = {"name": label,
                           "coefficients": self.fit.block_coefficients(label).tolist()}
            if label in self.bases:
                b = self.bases[label]
                entry["basis"] = {"domain": list(b.domain), "n_basis": b.n_basis}
                entry["n_components"] = self.decompositions[label].n_components
            terms.append(entry)
        return {
            "model": "srm",
            "family": self.spec.family,
            "response": self.spec.response,
            "intercept": self.spec.intercept,
            "terms": terms,
            "dropped_terms": list(self.dropped_terms),
            "posterior_cov": self.fit.posterior_cov.tolist(),
            "dispersion": self.fit.dispersion,
            "edf": self.fit.edf,
            "lambdas": self.fit.lambdas,
            "n_obs": self.fit.n_obs,
            "warnings": list(self.fit.warnings),
        }


def _score_map(dec: FpcaDecomposition, basis: BSplineBasis) -> np.ndarray:
    w = dec.weights
    return (dec.eigenfunctions * w) @ basis.eval(dec.grid.points)


def fit_srm(data: MixedDataset, spec: SrmSpec, lambdas=None) -> SrmFit:
    """Fit a scalar-response model on fully observed rows of `data`."""
    resp = data.column(spec.response)
    if resp.kind == "functional":
        raise DataError(f"response {spec.response!r} must be a scalar column")
    used = [spec.response, *spec.scalar_terms, *spec.functional_terms]
    for name in used:
        col = data.column(name)
        if not col.observed.all():
            raise IncompleteDataError(
                f"column {name!r} has {col.n_missing} missing rows; "
                "model fitting requires complete data"
            )
    y = resp.values
    if spec.family == "bernoulli" and not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("bernoulli response must be 0/1")

    blocks: list[DesignBlock] = []
    if spec.intercept:
        blocks.append(DesignBlock("intercept", np.ones((data.n, 1))))
    for name in spec.scalar_terms:
        col = data.column(name)
        if col.kind == "functional":
            raise DataError(f"scalar term {name!r} refers to a functional column")
        blocks.append(DesignBlock(name, col.values[:, None]))

    decs: dict[str, FpcaDecomposition] = {}
    maps: dict[str, np.ndarray] = {}
    bases: dict[str, BSplineBasis] = {}
    dropped: list[str] = []
    for name in spec.functional_terms:
        col = data.column(name)
        if col.kind != "functional":
            raise DataError(f"functional term {name!r} refers to a scalar column")
        dec = fit_fpca(col.values, col.grid, pve_threshold=spec.pve)
        if dec.degenerate or dec.n_components == 0:
            warnings.warn(f"functional term {name!r} has degenerate covariance; "
                          "dropping it from the model")
            dropped.append(name)
            continue
        basis = BSplineBasis(col.grid.domain, spec.n_basis)
        gmat = _score_map(dec, basis)
        decs[name] = dec
        maps[name] = gmat
        bases[name] = basis
        blocks.append(DesignBlock(name, dec.scores @ gmat, basis.penalty()))

    if spec.family == "gaussian":
        fit = fit_gaussian(y, blocks, lambdas=lambdas)
    else:
        fit = fit_bernoulli(y, blocks, lambdas=lambdas)
    return SrmFit(spec=spec, fit=fit, decompositions=decs, score_maps=maps,
                  bases=bases, dropped_terms=tuple(dropped))


def linear_predictor(fit: SrmFit, data: MixedDataset) -> np.ndarray:
    spec = fit.spec
    for name in (*spec.scalar_terms, *spec.functional_terms):
        col = data.column(name)
        if not col.observed.all():
            raise IncompleteDataError(f"predictor {name!r} has missing rows")
    eta = np.zeros(data.n)
    if spec.intercept:
        eta += fit.fit.block_coefficients("intercept")[0]
    for name in spec.scalar_terms:
        eta += data.column(name).values * fit.fit.block_coefficients(name)[0]
    for name in spec.functional_terms:
        if name in fit.dropped_terms:
            continue
        col = data.column(name)
        dec = fit.decompositions[name]
        if col.grid != dec.grid:
            raise DataError(f"functional term {name!r}: grid differs from the fitted one")
        scores = project_scores(dec, col.values)
        eta += scores @ fit.score_maps[name] @ fit.fit.block_coefficients(name)
    return eta


def predict_srm(fit: SrmFit, data: MixedDataset) -> np.ndarray:
    """Predicted mean response: identity (gaussian) or expit (bernoulli)."""
    eta = linear_predictor(fit, data)
    if fit.spec.family == "bernoulli":
        from scipy.special import expit
        return expit(eta)
    return eta


def coefficient_function(fit: SrmFit, term: str, points=None):
    """(estimate, pointwise se) of a functional-covariate coefficient."""
    if term not in fit.bases:
        raise DataError(f"unknown functional term {term!r}")
    basis = fit.bases[term]
    pts = (fit.decompositions[term].grid.points if points is None
           else np.asarray(points, dtype=float))
    return expand_with_se(basis, fit.fit.block_coefficients(term),
                          fit.fit.block_cov(term), pts)


def scalar_coefficient(fit: SrmFit, term: str) -> tuple[float, float]:
    """(estimate, variance) of a scalar term or the intercept."""
    labels = (("intercept",) if fit.spec.intercept else ()) + fit.spec.scalar_terms
    if term not in labels:
        raise DataError(f"unknown scalar term {term!r}")
    est = float(fit.fit.block_coefficients(term)[0])
    var = float(fit.fit.block_cov(term)[0, 0])
    return est, var
