"""Regenerate the small bundled dataset under tests/data/.

Forty subjects, a 21-point grid on [0, 10], two scalar covariates plus one
binary, and a functional response; eight z2 values and six whole response
curves are blanked out.  Run from the repository root:

    python3 tools/make_toy_data.py
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from fregmice.dataset import (MixedDataset, functional_column, scalar_column,
                              write_csv, write_sidecar)
from fregmice.fdgrid import uniform_grid

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"


def build() -> MixedDataset:
    rng = np.random.default_rng(7)
    n = 40
    grid = uniform_grid(0.0, 10.0, 21)
    t = grid.points

    z1 = rng.binomial(1, 0.4, size=n).astype(float)
    eps = rng.standard_normal((n, 2))
    chol = np.array([[1.0, 0.0], [0.6, 0.8]])
    z23 = np.array([2.0, 0.0]) + eps @ chol.T
    z2, z3 = z23[:, 0].copy(), z23[:, 1].copy()

    Y = (0.25 * t
         + np.outer(z1, np.sin(np.pi * t / 10))
         + np.outer(z2, 0.3 * np.ones_like(t))
         + np.outer(z3, -0.2 * np.sin(np.pi * t / 10))
         + 0.6 * rng.standard_normal((n, len(t))))

    z2_missing = rng.choice(n, size=8, replace=False)
    y_missing = rng.choice(n, size=6, replace=False)
    z2_obs = np.ones(n, dtype=bool)
    z2_obs[z2_missing] = False
    z2[~z2_obs] = np.nan
    y_obs = np.ones(n, dtype=bool)
    y_obs[y_missing] = False
    Y[~y_obs] = np.nan

    return MixedDataset([
        scalar_column("z1", z1, binary=True),
        scalar_column("z2", z2, observed=z2_obs),
        scalar_column("z3", z3),
        functional_column("Y", Y, grid, observed=y_obs),
    ])


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    data = build()
    write_csv(data, OUT / "toy.csv")
    write_sidecar(data, OUT / "toy.json")

    frm_model = {"model": "frm", "response": "Y",
                 "scalar_terms": ["z1", "z2", "z3"], "n_basis": 8}
    srm_model = {"model": "srm", "response": "z2",
                 "scalar_terms": ["z1", "z3"], "functional_terms": ["Y"],
                 "n_basis": 8}
    with open(OUT / "toy_model.json", "w", encoding="utf-8") as fh:
        json.dump(frm_model, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(OUT / "toy_impute.json", "w", encoding="utf-8") as fh:
        json.dump({"models": {"z2": srm_model, "Y": frm_model},
                   "m": 3, "v": 5, "seed": 11}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote toy data under {OUT}")


if __name__ == "__main__":
    main()
