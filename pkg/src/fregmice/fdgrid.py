"""Grids, quadrature weights, and the functional-sample container.

Curves live on a shared, strictly increasing grid. Integrals are approximated
by quadrature sums Σ_d Δ_d f(t_d); the default weights are trapezoidal, which
is exact for affine integrands and agrees with a rectangle rule to O(Δ²) on
dense grids. A left-rectangle rule is kept only for compatibility experiments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidGridError


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing evaluation grid for functional observations."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise InvalidGridError("grid points must be one-dimensional")
        if pts.size < 2:
            raise InvalidGridError("grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidGridError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise InvalidGridError("grid points must be strictly increasing")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.points.size, self.points[0], self.points[-1]))

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.points[0]), float(self.points[-1])

    @property
    def span(self) -> float:
        return float(self.points[-1] - self.points[0])


def uniform_grid(a: float, b: float, n_points: int) -> Grid:
    """Equally spaced grid of `n_points` points on [a, b]."""
    return Grid(np.linspace(a, b, n_points))


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """One curve: a value per grid point."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size != len(self.grid):
            raise DimensionError(
                f"curve has {vals.size} values for a {len(self.grid)}-point grid"
            )
        object.__setattr__(self, "values", vals)


def quadrature_weights(grid: Grid, rule: str = "trapezoid") -> np.ndarray:
    """Quadrature weights Δ for the grid.

    Parameters
    ----------
    grid : Grid
    rule : {"trapezoid", "left"}
        "trapezoid" (default) is exact for affine functions. "left" is the
        rectangle rule Δ_d = t_{d+1} − t_d with a zero final weight, provided
        only for bit-compatibility experiments.

    Returns
    -------
    ndarray of shape (len(grid),), summing to t_G − t_0.
    """
    pts = grid.points
    gaps = np.diff(pts)
    w = np.zeros(pts.size)
    if rule == "trapezoid":
        w[:-1] += gaps / 2.0
        w[1:] += gaps / 2.0
    elif rule == "left":
        w[:-1] = gaps
    else:
        raise InvalidGridError(f"unknown quadrature rule {rule!r}")
    return w


def integrate(sample, weights: np.ndarray) -> float:
    """Quadrature sum Σ_d Δ_d · values_d.

    `sample` may be a FunctionalSample or a plain value vector on the same
    grid as `weights`.
    """
    values = sample.values if isinstance(sample, FunctionalSample) else np.asarray(sample, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape[-1] != weights.size:
        raise DimensionError(
            f"length mismatch: {values.shape[-1]} values vs {weights.size} weights"
        )
    return float(values @ weights) if values.ndim == 1 else values @ weights


def as_curve_matrix(curves, grid: Grid) -> np.ndarray:
    """Stack curves into an (n, G) matrix, validating grids along the way."""
    if isinstance(curves, np.ndarray):
        mat = np.atleast_2d(np.asarray(curves, dtype=float))
    else:
        rows = []
        for c in curves:
            if isinstance(c, FunctionalSample):
                if c.grid != grid:
                    raise DimensionError("curve grid differs from the collection grid")
                rows.append(c.values)
            else:
                rows.append(np.asarray(c, dtype=float))
        mat = np.vstack(rows) if rows else np.empty((0, len(grid)))
    if mat.shape[1] != len(grid):
        raise DimensionError(
            f"curves have {mat.shape[1]} points for a {len(grid)}-point grid"
        )
    return mat
