"""Chained-equations multiple imputation over mixed scalar/functional variables.

The algorithm runs M independent streams. Each stream hot-deck-fills every
hole (missing curves are replaced by whole donor curves), then performs V
Gibbs-style sweeps over the incomplete variables in ascending-missingness
order. A visit to variable j:

  1. splits rows by j's *original* missingness mask,
  2. draws a bootstrap resample (size n_obs, with replacement) of the
     originally-observed rows — this is where parameter uncertainty enters,
  3. fits j's conditional model (scalar target: scalar-response regression;
     functional target: functional-response regression) on the bootstrap
     sample against the current iterate of the other columns,
  4. draws predictive values for the originally-missing rows only —
     gaussian: mu_i + N(0, sigma2) with sigma2 the fit's residual dispersion;
     binary: Bernoulli(mu_i); functional: mu_i(t) plus a random curve from an
     FPCA (99% variance) of the bootstrap fit's residual curves,
  5. clamps drawn scalars to the column's declared range, and overwrites only
     the originally-missing cells.

A degenerate bootstrap response (zero variance / single class) or a fit
failure falls back to a hot-deck draw for that visit, with a recorded warning.

Randomness is a counter-based (Philox) generator keyed by
(seed, stream, iteration, column index), with iteration 0 reserved for the
initial fills — so streams can run concurrently with schedule-independent
results.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Column, MixedDataset
from .errors import (ConfigError, DataError, FitError, FregmiceError,
                     InsufficientDataError, RankError,
                     UnimputableColumnError)
from .fpca import draw_curves, fit_fpca
from .frm import FrmSpec, fit_frm, predict_frm, residual_curves
from .srm import SrmSpec, fit_srm, predict_srm

RESIDUAL_PVE = 0.99


def model_spec_from_dict(obj: dict):
    kind = obj.get("model")
    if kind == "frm":
        return FrmSpec.from_dict(obj)
    if kind == "srm":
        return SrmSpec.from_dict(obj)
    raise ConfigError(f"model spec must declare model 'frm' or 'srm', got {kind!r}")


@dataclass(frozen=True)
class ImputationSpec:
    """How to impute: per-variable conditional models, M streams, V sweeps."""

    models: dict[str, FrmSpec | SrmSpec]
    m: int = 5
    v: int = 20
    seed: int = 0
    visit_order: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.m < 1 or self.v < 1:
            raise ConfigError("need m >= 1 and v >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        for name, model in self.models.items():
            if model.response != name:
                raise ConfigError(
                    f"conditional model for {name!r} has response "
                    f"{model.response!r}; it must model the variable itself"
                )
        if self.visit_order is not None:
            object.__setattr__(self, "visit_order", tuple(self.visit_order))

    def to_dict(self) -> dict:
        out = {
            "m": self.m,
            "v": self.v,
            "seed": self.seed,
            "models": {name: mod.to_dict() for name, mod in self.models.items()},
        }
        if self.visit_order is not None:
            out["visit_order"] = list(self.visit_order)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ImputationSpec":
        models = {name: model_spec_from_dict(mod)
                  for name, mod in obj.get("models", {}).items()}
        order = obj.get("visit_order")
        return cls(models=models,
                   m=int(obj.get("m", 5)),
                   v=int(obj.get("v", 20)),
                   seed=int(obj.get("seed", 0)),
                   visit_order=tuple(order) if order is not None else None)


@dataclass(frozen=True)
class TraceRecord:
    stream: int
    iteration: int
    variable: str
    statistic: str            # mean | sd | pointwise-mean | pointwise-sd
    value: float | np.ndarray


@dataclass
class ImputationRun:
    datasets: list[MixedDataset]
    traces: list[TraceRecord]
    spec: ImputationSpec
    visit_order: tuple[str, ...]
    masks: dict[str, np.ndarray]
    warnings: list[str] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.datasets)


def keyed_rng(seed: int, stream: int, iteration: int, var_index: int) -> np.random.Generator:
    """Counter-based generator for one (stream, iteration, variable) cell."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, stream, iteration, var_index]))
    )


def order_variables(data: MixedDataset) -> list[str]:
    """Incomplete variables, ascending missing count; ties keep column order."""
    incomplete = [(c.n_missing, i, c.name)
                  for i, c in enumerate(data.columns) if c.n_missing > 0]
    incomplete.sort()
    return [name for _, _, name in incomplete]


def _fill_column(col: Column, rng: np.random.Generator) -> None:
    obs_idx = np.flatnonzero(col.observed)
    mis_idx = np.flatnonzero(~col.observed)
    if mis_idx.size == 0:
        return
    if obs_idx.size == 0:
        raise UnimputableColumnError(
            f"column {col.name!r} has no observed values to draw from"
        )
    donors = obs_idx[rng.integers(0, obs_idx.size, size=mis_idx.size)]
    col.values[mis_idx] = col.values[donors]
    col.observed[mis_idx] = True


def initialize_fill(data: MixedDataset, rng: np.random.Generator) -> MixedDataset:
    """Hot-deck fill: every hole gets a uniformly drawn observed donor value
    of its own column (whole curves for functional columns)."""
    out = data.copy()
    for col in out.columns:
        _fill_column(col, rng)
    return out


def _hot_deck_draw(values: np.ndarray, observed: np.ndarray,
                   n_draw: int, rng: np.random.Generator) -> np.ndarray:
    obs_idx = np.flatnonzero(observed)
    return values[obs_idx[rng.integers(0, obs_idx.size, size=n_draw)]]


def _degenerate_response(col_kind: str, y: np.ndarray) -> bool:
    if col_kind == "binary":
        return bool(np.all(y == y.flat[0]))
    return bool(np.ptp(y) == 0.0)


def impute_variable_once(current: MixedDataset, target: str, model,
                         original_mask: np.ndarray, rng: np.random.Generator,
                         fallback_log: list[str] | None = None) -> MixedDataset:
    """One Gibbs visit to `target` on a fully filled dataset (in place).

    Rows where `original_mask` is False get fresh predictive draws from a
    conditional model fitted to a bootstrap resample of the originally
    observed rows; everything else is untouched.
    """
    col = current.column(target)
    mis_idx = np.flatnonzero(~np.asarray(original_mask, dtype=bool))
    if mis_idx.size == 0:
        return current
    obs_idx = np.flatnonzero(original_mask)

    boot_rows = obs_idx[rng.integers(0, obs_idx.size, size=obs_idx.size)]
    boot = current.subset(boot_rows)
    y_boot = boot.column(target).values

    def fallback(reason: str) -> MixedDataset:
        if fallback_log is not None:
            fallback_log.append(f"{target}: hot-deck fallback ({reason})")
        col.values[mis_idx] = _hot_deck_draw(col.values, original_mask,
                                             mis_idx.size, rng)
        return current

    if _degenerate_response(col.kind, y_boot):
        return fallback("degenerate bootstrap response")

    try:
        if col.kind == "functional":
            fit = fit_frm(boot, model)
            mu = predict_frm(fit, current.subset(mis_idx))
            res = residual_curves(fit, boot)
            res_fpca = fit_fpca(res, col.grid, pve_threshold=RESIDUAL_PVE)
            if res_fpca.degenerate or res_fpca.n_components == 0:
                drawn = mu
            else:
                drawn = mu + draw_curves(res_fpca, mis_idx.size, rng)
        else:
            fit = fit_srm(boot, model)
            mu = predict_srm(fit, current.subset(mis_idx))
            if col.kind == "binary":
                drawn = (rng.random(mis_idx.size) < mu).astype(float)
            else:
                sigma = float(np.sqrt(max(fit.fit.dispersion, 0.0)))
                drawn = mu + sigma * rng.standard_normal(mis_idx.size)
    except (FregmiceError, np.linalg.LinAlgError) as exc:
        return fallback(f"fit failure: {exc}")

    if col.value_range is not None and col.kind == "continuous":
        drawn = np.clip(drawn, col.value_range[0], col.value_range[1])
    col.values[mis_idx] = drawn
    return current


def _imputed_stats(col: Column, mis_idx: np.ndarray) -> list[tuple[str, float | np.ndarray]]:
    vals = col.values[mis_idx]
    if col.kind == "functional":
        sd = vals.std(axis=0, ddof=1) if mis_idx.size > 1 else np.zeros(vals.shape[1])
        return [("pointwise-mean", vals.mean(axis=0)), ("pointwise-sd", sd)]
    sd = float(vals.std(ddof=1)) if mis_idx.size > 1 else 0.0
    return [("mean", float(vals.mean())), ("sd", sd)]


def _run_stream(data: MixedDataset, spec: ImputationSpec, order: list[str],
                masks: dict[str, np.ndarray], stream: int):
    current = data.copy()
    for col in current.columns:
        if col.n_missing:
            _fill_column(col, keyed_rng(spec.seed, stream, 0,
                                        data.column_index(col.name)))
    traces: list[TraceRecord] = []
    warnings_log: list[str] = []
    for v in range(1, spec.v + 1):
        for name in order:
            rng = keyed_rng(spec.seed, stream, v, data.column_index(name))
            sink: list[str] = []
            impute_variable_once(current, name, spec.models[name],
                                 masks[name], rng, fallback_log=sink)
            warnings_log.extend(f"stream {stream} iteration {v} {msg}" for msg in sink)
        for name in order:
            mis_idx = np.flatnonzero(~masks[name])
            for stat, val in _imputed_stats(current.column(name), mis_idx):
                traces.append(TraceRecord(stream, v, name, stat, val))
    return current, traces, warnings_log


def run_fregmice(data: MixedDataset, spec: ImputationSpec,
                 threads: int = 1) -> ImputationRun:
    """Run the full procedure: M streams of V sweeps each."""
    order = order_variables(data)
    if spec.visit_order is not None:
        if sorted(spec.visit_order) != sorted(order):
            raise ConfigError(
                "visit_order must be a permutation of the incomplete variables "
                f"{sorted(order)}"
            )
        order = list(spec.visit_order)
    for name in order:
        if name not in spec.models:
            raise ConfigError(f"incomplete variable {name!r} has no conditional model")
        if data.column(name).n_missing == data.n:
            raise UnimputableColumnError(
                f"column {name!r} has no observed values to draw from"
            )
        model = spec.models[name]
        wants_functional = isinstance(model, FrmSpec)
        is_functional = data.column(name).kind == "functional"
        if wants_functional != is_functional:
            raise ConfigError(
                f"conditional model kind for {name!r} does not match the "
                "column kind (frm for functional targets, srm for scalar)"
            )
    masks = {name: data.column(name).observed.copy() for name in order}

    streams = range(spec.m)
    if threads > 1 and spec.m > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=min(threads, spec.m)) as pool:
            results = list(pool.map(
                lambda s: _run_stream(data, spec, order, masks, s), streams))
    else:
        results = [_run_stream(data, spec, order, masks, s) for s in streams]

    datasets, traces, warns = [], [], []
    for completed, tr, wl in results:
        datasets.append(completed)
        traces.extend(tr)
        warns.extend(wl)
    return ImputationRun(datasets=datasets, traces=traces, spec=spec,
                         visit_order=tuple(order), masks=masks, warnings=warns)


@dataclass(frozen=True)
class TrendFlag:
    stream: int
    variable: str
    slope: float
    threshold: float
    flagged: bool


def stream_diagnostics(run: ImputationRun) -> tuple[list[TraceRecord], list[TrendFlag]]:
    """The long trace table plus per-(stream, variable) trend advisories.

    The advisory fits a least-squares slope to each stream's mean trace over
    iterations (functional traces are reduced to the grid average of the
    pointwise mean) and flags |slope| exceeding twice the cross-stream
    standard deviation of final-iteration means.
    """
    def mean_of(rec: TraceRecord) -> float:
        return float(np.mean(rec.value))

    by_sv: dict[tuple[int, str], list[TraceRecord]] = {}
    for rec in run.traces:
        if rec.statistic in ("mean", "pointwise-mean"):
            by_sv.setdefault((rec.stream, rec.variable), []).append(rec)

    flags: list[TrendFlag] = []
    for variable in run.visit_order:
        finals = []
        slopes = {}
        for stream in range(run.m):
            recs = sorted(by_sv.get((stream, variable), ()),
                          key=lambda r: r.iteration)
            if not recs:
                continue
            ys = np.array([mean_of(r) for r in recs])
            xs = np.array([r.iteration for r in recs], dtype=float)
            slope = float(np.polyfit(xs, ys, 1)[0]) if len(recs) > 1 else 0.0
            # lstsq noise on a perfectly flat trace is not a trend
            if abs(slope) <= 1e-12 * max(1.0, float(np.abs(ys).max())):
                slope = 0.0
            slopes[stream] = slope
            finals.append(ys[-1])
        threshold = 2.0 * float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0
        for stream, slope in slopes.items():
            flags.append(TrendFlag(stream, variable, slope, threshold,
                                   bool(abs(slope) > threshold)))
    return list(run.traces), flags
