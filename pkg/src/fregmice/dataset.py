"""Mixed scalar/functional datasets with missingness masks, and their CSV form.

A dataset is a list of typed columns over n rows: scalar-continuous,
scalar-binary, or functional (all curves of a column share one Grid). Each
column carries an observed mask; missing cells hold NaN. On disk a dataset is
one wide CSV (functional column `X` becomes `X__t0..X__t{G-1}`) plus a JSON
sidecar holding the grids and, optionally, binary/range declarations:

    {"grids": {"X": [0.0, 0.1, ...]}, "binary": ["z1"], "ranges": {"w": [20, 80]}}

Missing scalars are empty fields (or NA); a missing curve is an entirely empty
functional block — partially empty blocks are rejected, curves are missing
wholly or not at all.
"""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError
from .fdgrid import Grid

SCALAR_KINDS = ("continuous", "binary")
KINDS = SCALAR_KINDS + ("functional",)


def format_float(x: float) -> str:
    """17-significant-digit decimal form (round-trip exact)."""
    return format(float(x), ".17g")


@dataclass
class Column:
    name: str
    kind: str
    values: np.ndarray
    observed: np.ndarray
    grid: Grid | None = None
    value_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown column kind {self.kind!r}")
        vals = np.asarray(self.values, dtype=float)
        obs = np.asarray(self.observed, dtype=bool)
        if self.kind == "functional":
            if self.grid is None:
                raise DataError(f"functional column {self.name!r} needs a grid")
            if vals.ndim != 2 or vals.shape[1] != len(self.grid):
                raise DimensionError(
                    f"column {self.name!r}: values {vals.shape} do not match "
                    f"its {len(self.grid)}-point grid"
                )
        else:
            if vals.ndim != 1:
                raise DimensionError(f"scalar column {self.name!r} must be 1-D")
            if self.grid is not None:
                raise DataError(f"scalar column {self.name!r} cannot carry a grid")
        if obs.shape != (vals.shape[0],):
            raise DimensionError(f"column {self.name!r}: mask length mismatch")
        if self.kind == "functional":
            if not np.all(np.isfinite(vals[obs])):
                raise DataError(f"column {self.name!r}: non-finite observed curve values")
        else:
            seen = vals[obs]
            if not np.all(np.isfinite(seen)):
                raise DataError(f"column {self.name!r}: non-finite observed values")
            if self.kind == "binary" and seen.size and not np.all(np.isin(seen, (0.0, 1.0))):
                raise DataError(f"binary column {self.name!r} has values outside {{0,1}}")
        if self.value_range is not None and self.kind != "functional":
            lo, hi = self.value_range
            seen = vals[obs]
            if seen.size and (seen.min() < lo or seen.max() > hi):
                raise DataError(
                    f"column {self.name!r}: observed values violate range [{lo}, {hi}]"
                )
        self.values = vals
        self.observed = obs

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_missing(self) -> int:
        return int((~self.observed).sum())

    def copy(self) -> "Column":
        return Column(self.name, self.kind, self.values.copy(),
                      self.observed.copy(), self.grid, self.value_range)


def scalar_column(name, values, observed=None, binary=False, value_range=None) -> Column:
    values = np.asarray(values, dtype=float)
    if observed is None:
        observed = np.isfinite(values)
    return Column(name, "binary" if binary else "continuous", values,
                  observed, value_range=value_range)


def functional_column(name, values, grid: Grid, observed=None) -> Column:
    values = np.asarray(values, dtype=float)
    if observed is None:
        observed = np.all(np.isfinite(values), axis=1)
    return Column(name, "functional", values, observed, grid=grid)


class MixedDataset:
    """n rows of typed scalar and functional columns with missingness masks."""

    def __init__(self, columns: list[Column]):
        if not columns:
            raise DataError("dataset needs at least one column")
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        n = columns[0].n
        for c in columns:
            if c.n != n:
                raise DimensionError(
                    f"column {c.name!r} has {c.n} rows, expected {n}"
                )
        self.columns = list(columns)
        self._by_name = {c.name: c for c in columns}

    @property
    def n(self) -> int:
        return self.columns[0].n

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def column(self, name: str) -> Column:
        try:
            return self._by_name[name]
        except KeyError:
            raise DataError(f"no column named {name!r}") from None

    def column_index(self, name: str) -> int:
        return self.names.index(name)

    def complete_row_mask(self, names=None) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        for name in (names if names is not None else self.names):
            mask &= self.column(name).observed
        return mask

    @property
    def is_complete(self) -> bool:
        return bool(self.complete_row_mask().all())

    def subset(self, rows) -> "MixedDataset":
        rows = np.asarray(rows)
        cols = []
        for c in self.columns:
            cols.append(Column(c.name, c.kind, c.values[rows].copy(),
                               c.observed[rows].copy(), c.grid, c.value_range))
        return MixedDataset(cols)

    def copy(self) -> "MixedDataset":
        return MixedDataset([c.copy() for c in self.columns])


# ---------------------------------------------------------------------------
# CSV + sidecar serialization
# ---------------------------------------------------------------------------

_FUNC_COL = re.compile(r"^(?P<var>.+)__t(?P<idx>\d+)$")


def sidecar_dict(data: MixedDataset) -> dict:
    out: dict = {"grids": {}}
    binary, ranges = [], {}
    for c in data.columns:
        if c.kind == "functional":
            out["grids"][c.name] = [float(t) for t in c.grid.points]
        elif c.kind == "binary":
            binary.append(c.name)
        if c.value_range is not None:
            ranges[c.name] = [float(c.value_range[0]), float(c.value_range[1])]
    if binary:
        out["binary"] = binary
    if ranges:
        out["ranges"] = ranges
    return out


def write_sidecar(data: MixedDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sidecar_dict(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(data: MixedDataset, path) -> None:
    """Wide CSV with 17-significant-digit floats; missing cells are empty."""
    header: list[str] = []
    for c in data.columns:
        if c.kind == "functional":
            header.extend(f"{c.name}__t{g}" for g in range(len(c.grid)))
        else:
            header.append(c.name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            row: list[str] = []
            for c in data.columns:
                if c.kind == "functional":
                    if c.observed[i]:
                        row.extend(format_float(v) for v in c.values[i])
                    else:
                        row.extend("" for _ in range(len(c.grid)))
                else:
                    row.append(format_float(c.values[i]) if c.observed[i] else "")
            writer.writerow(row)


def _parse_scalar(cell: str) -> float:
    cell = cell.strip()
    if cell == "" or cell.upper() == "NA":
        return np.nan
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"cannot parse {cell!r} as a number") from None


def read_csv(path, sidecar: dict | None = None) -> MixedDataset:
    """Read a wide CSV back into a MixedDataset.

    `sidecar` is the parsed sidecar JSON dict; without one every column is
    treated as scalar. Binary columns may be declared (`binary` key) or are
    inferred when all observed values are 0/1.
    """
    sidecar = sidecar or {}
    grids = {name: Grid(np.asarray(pts, dtype=float))
             for name, pts in sidecar.get("grids", {}).items()}
    declared_binary = set(sidecar.get("binary", []))
    ranges = {k: (float(v[0]), float(v[1])) for k, v in sidecar.get("ranges", {}).items()}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty CSV") from None
        rows = [r for r in reader]

    # Column layout: functional blocks are contiguous runs of <var>__t<idx>.
    layout: list[tuple[str, str, list[int]]] = []  # (name, kind-ish, csv col idxs)
    seen: dict[str, list[int]] = {}
    order: list[str] = []
    for j, col in enumerate(header):
        m = _FUNC_COL.match(col)
        var = m.group("var") if m and (m.group("var") in grids) else None
        name = var if var is not None else col
        if name not in seen:
            seen[name] = []
            order.append(name)
        seen[name].append(j)

    columns: list[Column] = []
    n = len(rows)
    for name in order:
        idxs = seen[name]
        if name in grids:
            grid = grids[name]
            if len(idxs) != len(grid):
                raise DataError(
                    f"functional column {name!r} has {len(idxs)} CSV columns "
                    f"but its grid has {len(grid)} points"
                )
            vals = np.full((n, len(grid)), np.nan)
            obs = np.zeros(n, dtype=bool)
            for i, row in enumerate(rows):
                cells = [row[j].strip() for j in idxs]
                empty = [c == "" or c.upper() == "NA" for c in cells]
                if all(empty):
                    continue
                if any(empty):
                    raise DataError(
                        f"row {i}: functional column {name!r} is partially "
                        "missing; curves must be wholly missing or wholly observed"
                    )
                vals[i] = [float(c) for c in cells]
                obs[i] = True
            columns.append(Column(name, "functional", vals, obs, grid=grid))
        else:
            if len(idxs) != 1:
                raise DataError(f"duplicate scalar column {name!r}")
            j = idxs[0]
            vals = np.array([_parse_scalar(row[j]) for row in rows])
            obs = np.isfinite(vals)
            if name in declared_binary:
                kind = "binary"
            else:
                seen_vals = vals[obs]
                kind = ("binary" if seen_vals.size and
                        np.all(np.isin(seen_vals, (0.0, 1.0))) else "continuous")
            columns.append(Column(name, kind, vals, obs,
                                  value_range=ranges.get(name)))
    return MixedDataset(columns)


def read_sidecar(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
