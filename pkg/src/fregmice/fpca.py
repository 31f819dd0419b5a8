"""Functional principal component analysis of a dense curve collection.

Curves are centered at the pointwise mean and the quadrature-weighted sample
covariance operator is eigendecomposed directly (no covariance smoothing — a
deliberate simplification appropriate for dense, low-noise curves such as the
fitted residuals this is mostly applied to). Eigenfunctions are orthonormal
under the quadrature inner product; eigenvalues are score variances.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .errors import DimensionError, InsufficientDataError, ConfigError
from .fdgrid import Grid, FunctionalSample, as_curve_matrix, quadrature_weights


@dataclass(frozen=True, eq=False)
class FpcaDecomposition:
    """Truncated Karhunen–Loève decomposition of a curve sample."""

    grid: Grid
    mean: np.ndarray                 # (G,)
    eigenfunctions: np.ndarray       # (K, G), quadrature-orthonormal rows
    eigenvalues: np.ndarray          # (K,), nonincreasing score variances
    scores: np.ndarray               # (n, K) training scores
    pve: float                       # cumulative PVE achieved at K
    weights: np.ndarray = field(repr=False, default=None)  # quadrature weights
    total_variance: float = 0.0      # Σ_g Δ_g Var-hat(C(t_g))
    degenerate: bool = False         # zero sample covariance

    @property
    def n_components(self) -> int:
        return int(self.eigenvalues.size)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.points.tolist(),
            "mean": self.mean.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "pve": self.pve,
            "degenerate": self.degenerate,
        }


def _fix_signs(psi: np.ndarray) -> np.ndarray:
    """Flip each eigenfunction so its leading non-negligible value is ≥ 0.

    The convention is a positive quadrature inner product with the first
    canonical basis direction; when ψ(t_0) is numerically zero, the first grid
    point with non-negligible magnitude decides instead (otherwise the sign
    would depend on rounding noise).
    """
    out = psi.copy()
    for k in range(out.shape[0]):
        row = out[k]
        big = np.abs(row) > 1e-9 * max(np.abs(row).max(), 1e-300)
        idx = int(np.argmax(big)) if big.any() else 0
        if row[idx] < 0:
            out[k] = -row
    return out


def fit_fpca(curves, grid: Grid, pve_threshold: float = 0.99) -> FpcaDecomposition:
    """Eigendecompose the quadrature-weighted sample covariance of `curves`.

    Parameters
    ----------
    curves : (n, G) array or sequence of FunctionalSample
    grid : Grid shared by all curves
    pve_threshold : keep the smallest K whose cumulative proportion of
        variance explained reaches this threshold (default 0.99).

    Returns
    -------
    FpcaDecomposition. A zero sample covariance yields K = 0 with
    ``degenerate=True`` rather than an error.
    """
    if not 0 < pve_threshold <= 1:
        raise ConfigError("pve_threshold must be in (0, 1]")
    mat = as_curve_matrix(curves, grid)
    n = mat.shape[0]
    if n < 2:
        raise InsufficientDataError("FPCA needs at least 2 curves")
    w = quadrature_weights(grid)
    mean = mat.mean(axis=0)
    centered = mat - mean
    cov = centered.T @ centered / (n - 1)
    total = float(w @ np.diag(cov))

    if total <= 1e-14 * max(1.0, float(np.abs(mat).max()) ** 2):
        empty = np.empty((0, len(grid)))
        return FpcaDecomposition(grid, mean, empty, np.empty(0), np.empty((n, 0)),
                                 pve=0.0, weights=w, total_variance=max(total, 0.0),
                                 degenerate=True)

    sw = np.sqrt(w)
    sym = sw[:, None] * cov * sw[None, :]
    sym = (sym + sym.T) / 2.0
    vals, vecs = eigh(sym)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vals = np.clip(vals, 0.0, None)

    frac = np.cumsum(vals) / total
    k = int(np.argmax(frac >= pve_threshold - 1e-12)) + 1
    psi = _fix_signs((vecs[:, :k] / sw[:, None]).T)
    lam = vals[:k]
    scores = centered @ (w[:, None] * psi.T)
    return FpcaDecomposition(grid, mean, psi, lam, scores, pve=float(frac[k - 1]),
                             weights=w, total_variance=total)


def project_scores(decomp: FpcaDecomposition, curves) -> np.ndarray:
    """Quadrature inner products of centered curves with the eigenfunctions."""
    mat = as_curve_matrix(curves, decomp.grid)
    if mat.shape[1] != len(decomp.grid):
        raise DimensionError("curves not on the decomposition grid")
    return (mat - decomp.mean) @ (decomp.weights[:, None] * decomp.eigenfunctions.T)


def draw_curve(decomp: FpcaDecomposition, rng: np.random.Generator) -> FunctionalSample:
    """One random curve μ̂ + Σ_k c_k ψ̂_k with c_k ~ N(0, λ̂_k)."""
    values = decomp.mean.copy()
    if decomp.n_components:
        c = rng.standard_normal(decomp.n_components) * np.sqrt(decomp.eigenvalues)
        values = values + c @ decomp.eigenfunctions
    return FunctionalSample(decomp.grid, values)


def draw_curves(decomp: FpcaDecomposition, n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent draws stacked as an (n, G) matrix (vectorized draw_curve)."""
    if decomp.n_components == 0:
        return np.tile(decomp.mean, (n, 1))
    c = rng.standard_normal((n, decomp.n_components)) * np.sqrt(decomp.eigenvalues)
    return decomp.mean + c @ decomp.eigenfunctions
