"""Simulation studies: data generators, missingness mechanisms, baselines, metrics.

Two study designs are reproduced end to end:

* ``frm-sim`` — a functional response Y(t) on three scalar covariates over 101
  grid points on [0, 10], with Gaussian-process noise and two coefficient sets.
  Scenario (a) masks z2 deterministically for the rows with the largest curve
  sums (exact missingness proportions); Scenario (b) masks z2 and Y through
  logistic models on logistic-transformed z1 and z3.

* ``srm-sim`` — a scalar response y on a scalar z and a functional predictor
  X(t) built from a random line, a Gaussian bump, and a 10-harmonic Fourier
  series. X is masked MCAR or MAR-given-y. The generator adds the grid *mean*
  of X(t_g) beta1(t_g) to y (so with beta1(t) = sin(pi t / 5) the integral-form
  analysis model sees an effective coefficient sin(pi t / 5)/10.1 — the grid
  mean equals the integral divided by 10.1 on this grid); the noise term has
  variance 0.5. Both conventions are what make the published missingness
  calibration (psi_0 = 6.2, 1, -3 at psi_1 = -6 hitting 10/20/30%) come out.

Baselines: ANM fits the pre-mask data, CCA the complete rows, Mean a
mean-imputed copy; fregMICE imputes (M streams, V sweeps) and pools. Metrics
are pointwise standardized bias, pointwise coverage and width of 95% bands,
and MSE / standardized bias / coverage / width for scalar coefficients.

Replications are deterministic given the config seed: replication r draws from
a counter-based generator keyed by (seed, r), and the imputation seed inside a
replication is derived from the same key.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .dataset import MixedDataset, functional_column, scalar_column
from .errors import ConfigError, InsufficientDataError, UnimputableColumnError
from .fdgrid import FunctionalSample, Grid, uniform_grid
from .frm import FrmSpec, coefficient_function as frm_coef, fit_frm
from .mice import ImputationSpec, run_fregmice
from .pool import pool_functional, pool_scalar, pooled_band
from .srm import (SrmSpec, coefficient_function as srm_coef, fit_srm,
                  scalar_coefficient)

STUDIES = ("frm-sim", "srm-sim")
METHODS = ("ANM", "CCA", "Mean", "fregMICE")
MISSING_TARGETS = (0.10, 0.20, 0.30)

SIM_GRID = uniform_grid(0.0, 10.0, 101)

# Scenario (b) logistic-mask intercepts, keyed by target missingness.
_ALPHA0 = {0.10: 2.1, 0.20: 1.3, 0.30: 0.8}       # z2 mask
_PSI0_B = {0.10: 2.3, 0.20: 1.5, 0.30: 0.9}       # Y mask
# srm-sim X-mask intercepts.
_PSI0_MCAR = {0.10: np.log(0.9 / 0.1), 0.20: np.log(0.8 / 0.2),
              0.30: np.log(0.7 / 0.3)}
_PSI0_MAR = {0.10: 6.2, 0.20: 1.0, 0.30: -3.0}
_PSI1_MAR = -6.0

# Grid mean of X*beta1 equals the integral divided by this on the 101-point grid.
SRM_SCALE = 10.1


@dataclass(frozen=True)
class ScenarioConfig:
    study: str
    n: int = 350
    missing_target: float = 0.20
    parameter_set: int = 1          # frm-sim
    scenario: str = "a"             # frm-sim
    mechanism: str = "MCAR"         # srm-sim
    seed: int = 0
    replications: int = 100
    m: int = 5
    v: int = 20

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"study must be one of {STUDIES}, got {self.study!r}")
        if not any(abs(self.missing_target - p) < 1e-9 for p in MISSING_TARGETS):
            raise ConfigError(f"missing_target must be one of {MISSING_TARGETS}")
        object.__setattr__(self, "missing_target",
                           min(MISSING_TARGETS,
                               key=lambda p: abs(p - self.missing_target)))
        if self.study == "frm-sim":
            if self.parameter_set not in (1, 2):
                raise ConfigError("parameter_set must be 1 or 2")
            if self.scenario not in ("a", "b"):
                raise ConfigError("scenario must be 'a' or 'b'")
        else:
            if self.mechanism not in ("MCAR", "MAR"):
                raise ConfigError("mechanism must be 'MCAR' or 'MAR'")
        if self.n < 20:
            raise ConfigError("n must be at least 20")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.m < 1 or self.v < 1:
            raise ConfigError("need m >= 1 and v >= 1")

    def to_dict(self) -> dict:
        out = {"study": self.study, "n": self.n,
               "missing_target": self.missing_target, "seed": self.seed,
               "replications": self.replications, "m": self.m, "v": self.v}
        if self.study == "frm-sim":
            out["parameter_set"] = self.parameter_set
            out["scenario"] = self.scenario
        else:
            out["mechanism"] = self.mechanism
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioConfig":
        kwargs = {k: obj[k] for k in ("study", "n", "missing_target",
                                      "parameter_set", "scenario", "mechanism",
                                      "seed", "replications", "m", "v")
                  if k in obj}
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def true_coefficients(parameter_set: int, grid: Grid) -> list[FunctionalSample]:
    """The four coefficient functions beta_0..beta_3 of the chosen set."""
    t = grid.points
    if parameter_set == 1:
        curves = [0.25 * t,
                  np.sin(np.pi * t / 10),
                  0.3 * np.exp(t / 5),
                  -0.2 * np.sin(np.pi * t / 10)]
    elif parameter_set == 2:
        bump2 = np.exp(-((t - 2.0) ** 2) / 2.0)
        bump8 = np.exp(-((t - 8.0) ** 2) / 2.0)
        curves = [0.25 * t,
                  np.sin(np.pi * t / 5),
                  (2.0 / np.sqrt(2 * np.pi)) * bump2,
                  (-1.0 / np.sqrt(2 * np.pi)) * (bump2 + bump8)]
    else:
        raise ConfigError("parameter_set must be 1 or 2")
    return [FunctionalSample(grid, c) for c in curves]


def gp_noise_covariance(grid: Grid) -> np.ndarray:
    """Covariance of the curve noise: 4 * 0.15**lag + 0.0025 on the diagonal.

    The exponential decay is per grid *step*, so neighbouring points share
    correlation 0.15 and the process is close to white; the marginal variance
    is 4.0025 everywhere.  Pointwise interval calibration in the recovery
    experiments depends on this weak-dependence regime.
    """
    lag = np.arange(len(grid), dtype=float)
    dist = np.abs(lag[:, None] - lag[None, :])
    return 4.0 * 0.15 ** dist + 0.05 ** 2 * np.eye(len(grid))


def _gp_noise(n: int, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    cov = gp_noise_covariance(grid)
    chol = np.linalg.cholesky(cov + 1e-10 * np.eye(len(grid)))
    return rng.standard_normal((n, len(grid))) @ chol.T


def gen_frm_dataset(config: ScenarioConfig, rng: np.random.Generator,
                    coefficients: list[FunctionalSample] | None = None,
                    noise_scale: float = 1.0) -> MixedDataset:
    """Complete functional-response dataset: z1, z2, z3, Y on SIM_GRID.

    Draw order (fixed for determinism): z1, then (z2, z3), then the noise.
    `coefficients` overrides the true coefficient functions, and
    `noise_scale` scales the curve noise (0.0 for noiseless recovery
    checks); the noise is drawn either way so the generator consumes the
    same stream regardless of scale.
    """
    if config.study != "frm-sim":
        raise ConfigError("gen_frm_dataset needs a frm-sim config")
    grid = SIM_GRID
    n = config.n
    z1 = rng.binomial(1, 0.4, size=n).astype(float)
    eps = rng.standard_normal((n, 2))
    chol = np.array([[1.0, 0.0], [0.6, 0.8]])       # unit variances, corr 0.6
    z23 = np.array([2.0, 0.0]) + eps @ chol.T
    z2, z3 = z23[:, 0], z23[:, 1]
    betas = (coefficients if coefficients is not None
             else true_coefficients(config.parameter_set, grid))
    b0, b1, b2, b3 = (b.values for b in betas)
    Y = (b0[None, :] + np.outer(z1, b1) + np.outer(z2, b2) + np.outer(z3, b3)
         + float(noise_scale) * _gp_noise(n, grid, rng))
    return MixedDataset([
        scalar_column("z1", z1, binary=True),
        scalar_column("z2", z2),
        scalar_column("z3", z3),
        functional_column("Y", Y, grid),
    ])


def _mask_column(data: MixedDataset, name: str, missing_rows: np.ndarray) -> None:
    col = data.column(name)
    col.values[missing_rows] = np.nan
    col.observed[missing_rows] = False


def apply_missingness(data: MixedDataset, config: ScenarioConfig,
                      rng: np.random.Generator) -> MixedDataset:
    """Masked copy of a frm-sim dataset under the configured scenario.

    Scenario (a) is deterministic: exactly round(p*n) rows with the largest
    curve sums s_i = sum_g Y_i(t_g) lose z2 (ties resolved by row order).
    Scenario (b) draws Bernoulli masks — z2 first, then Y — from logistic
    models on expit(z1) and expit(z3).
    """
    if config.study != "frm-sim":
        raise ConfigError("apply_missingness needs a frm-sim config")
    out = data.copy()
    p = config.missing_target
    if config.scenario == "a":
        s = data.column("Y").values.sum(axis=1)
        k = int(round(p * data.n))
        top = np.argsort(-s, kind="stable")[:k]
        _mask_column(out, "z2", top)
        return out
    z1 = data.column("z1").values
    z3 = data.column("z3").values
    p_obs_z2 = expit(_ALPHA0[p] + expit(z1) - expit(z3))
    _mask_column(out, "z2", np.flatnonzero(rng.random(data.n) >= p_obs_z2))
    p_obs_y = expit(_PSI0_B[p] - expit(z1) + expit(z3))
    _mask_column(out, "Y", np.flatnonzero(rng.random(data.n) >= p_obs_y))
    return out


def srm_true_beta(grid: Grid) -> np.ndarray:
    """Effective coefficient of X in the integral-form analysis model."""
    return np.sin(np.pi * grid.points / 5) / SRM_SCALE


def gen_srm_dataset(config: ScenarioConfig,
                    rng: np.random.Generator) -> tuple[MixedDataset, MixedDataset]:
    """(complete, masked) scalar-response datasets: z, X(t), y.

    Draw order: z, u1, u2, u3, Fourier coefficients v (sin/cos per harmonic),
    response noise, then the missingness mask on X.
    """
    if config.study != "srm-sim":
        raise ConfigError("gen_srm_dataset needs a srm-sim config")
    grid = SIM_GRID
    t = grid.points
    n = config.n
    z = rng.standard_normal(n)
    u1 = rng.uniform(0.0, 5.0, size=n)
    u2 = rng.normal(1.0, 0.2, size=n)                 # variance 0.04
    u3 = rng.standard_normal(n)
    X = (u1[:, None] + np.outer(u2, t)
         + np.outer(u3, (20.0 / np.sqrt(2 * np.pi)) * np.exp(-((t - 3.0) ** 2) / 2)))
    for k in range(1, 11):
        vk = rng.normal(0.0, 1.0 / k, size=(n, 2))    # variance 1/k^2
        X += np.outer(vk[:, 0], np.sin(2 * np.pi * k * t / 10))
        X += np.outer(vk[:, 1], np.cos(2 * np.pi * k * t / 10))
    beta1 = np.sin(np.pi * t / 5)
    y = z + (X * beta1).mean(axis=1) + rng.normal(0.0, np.sqrt(0.5), size=n)

    complete = MixedDataset([
        scalar_column("z", z),
        functional_column("X", X, grid),
        scalar_column("y", y),
    ])
    if config.mechanism == "MCAR":
        p_obs = np.full(n, expit(_PSI0_MCAR[config.missing_target]))
    else:
        p_obs = expit(_PSI0_MAR[config.missing_target] + _PSI1_MAR * y)
    masked = complete.copy()
    _mask_column(masked, "X", np.flatnonzero(rng.random(n) >= p_obs))
    return complete, masked


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def mean_impute(data: MixedDataset) -> MixedDataset:
    """Fill scalar holes with the observed mean, curve holes with the
    pointwise observed mean curve."""
    out = data.copy()
    for col in out.columns:
        mis = np.flatnonzero(~col.observed)
        if mis.size == 0:
            continue
        obs = np.flatnonzero(col.observed)
        if obs.size == 0:
            raise UnimputableColumnError(
                f"column {col.name!r} has no observed values to average"
            )
        if col.kind == "functional":
            col.values[mis] = col.values[obs].mean(axis=0)
        else:
            col.values[mis] = col.values[obs].mean()
        col.observed[mis] = True
    return out


def complete_cases(data: MixedDataset) -> MixedDataset:
    return data.subset(data.complete_row_mask())


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicationEstimate:
    """One method's estimates in one replication: per-coefficient bands."""
    curves: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)
    scalars: dict[str, tuple[float, float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class CurveMetrics:
    pw_sb: np.ndarray
    pw_cov: np.ndarray
    pw_width: np.ndarray
    degenerate: bool

    @property
    def mean_abs_sb(self) -> float:
        return float(np.mean(np.abs(self.pw_sb)))

    @property
    def mean_cov(self) -> float:
        return float(np.mean(self.pw_cov))

    @property
    def mean_width(self) -> float:
        return float(np.mean(self.pw_width))


@dataclass(frozen=True)
class ScalarMetrics:
    mse: float
    std_bias: float
    coverage: float
    width: float
    degenerate: bool


@dataclass(frozen=True)
class MethodMetrics:
    curves: dict[str, CurveMetrics]
    scalars: dict[str, ScalarMetrics]


@dataclass(frozen=True)
class MetricReport:
    study: str
    methods: dict[str, MethodMetrics]
    realized_missingness: dict[str, float]
    grid: np.ndarray
    config: ScenarioConfig | None = None


def _curve_metrics(bands, truth: np.ndarray) -> CurveMetrics:
    est = np.stack([b[0] for b in bands])
    lo = np.stack([b[1] for b in bands])
    hi = np.stack([b[2] for b in bands])
    sd = est.std(axis=0, ddof=1)
    degenerate = bool(np.any(sd == 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        sb = np.where(sd > 0, (est.mean(axis=0) - truth) / np.where(sd > 0, sd, 1.0), 0.0)
    cov = np.mean((lo <= truth) & (truth <= hi), axis=0)
    width = np.mean(hi - lo, axis=0)
    return CurveMetrics(pw_sb=sb, pw_cov=cov, pw_width=width, degenerate=degenerate)


def _scalar_metrics(bands, truth: float) -> ScalarMetrics:
    est = np.array([b[0] for b in bands])
    lo = np.array([b[1] for b in bands])
    hi = np.array([b[2] for b in bands])
    sd = est.std(ddof=1)
    degenerate = bool(sd == 0.0)
    sb = 0.0 if degenerate else float((est.mean() - truth) / sd)
    return ScalarMetrics(
        mse=float(np.mean((est - truth) ** 2)),
        std_bias=sb,
        coverage=float(np.mean((lo <= truth) & (truth <= hi))),
        width=float(np.mean(hi - lo)),
        degenerate=degenerate,
    )


def evaluate_estimates(results: dict[str, list[ReplicationEstimate]],
                       truth_curves: dict[str, np.ndarray],
                       truth_scalars: dict[str, float],
                       grid_points: np.ndarray,
                       study: str,
                       realized_missingness: dict[str, float] | None = None,
                       config: ScenarioConfig | None = None) -> MetricReport:
    methods: dict[str, MethodMetrics] = {}
    for method, reps in results.items():
        if len(reps) < 2:
            raise InsufficientDataError(
                "metrics need at least 2 replications (Monte Carlo sd)"
            )
        curves = {name: _curve_metrics([r.curves[name] for r in reps], truth)
                  for name, truth in truth_curves.items()}
        scalars = {name: _scalar_metrics([r.scalars[name] for r in reps], truth)
                   for name, truth in truth_scalars.items()}
        methods[method] = MethodMetrics(curves=curves, scalars=scalars)
    return MetricReport(study=study, methods=methods,
                        realized_missingness=realized_missingness or {},
                        grid=np.asarray(grid_points, dtype=float), config=config)


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))


def _rep_seed(seed: int, rep: int) -> int:
    state = np.random.SeedSequence([seed, rep, 1]).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


_Q95 = float(norm.ppf(0.975))


def _frm_bands(fit, terms, pts) -> dict[str, tuple]:
    out = {}
    for term in terms:
        est, se = frm_coef(fit, term, pts)
        out[term] = (est, est - _Q95 * se, est + _Q95 * se)
    return out


def _frm_replication(config: ScenarioConfig, rep: int, methods) -> tuple[
        dict[str, ReplicationEstimate], dict[str, float]]:
    rng = _rep_rng(config.seed, rep)
    data = gen_frm_dataset(config, rng)
    masked = apply_missingness(data, config, rng)
    spec = FrmSpec(response="Y", scalar_terms=("z1", "z2", "z3"), n_basis=20)
    terms = spec.term_labels
    pts = SIM_GRID.points
    missing = {name: masked.column(name).n_missing / masked.n
               for name in ("z2", "Y") if masked.column(name).n_missing}

    out: dict[str, ReplicationEstimate] = {}
    for method in methods:
        if method == "ANM":
            fit = fit_frm(data, spec)
            out[method] = ReplicationEstimate(curves=_frm_bands(fit, terms, pts))
        elif method == "CCA":
            fit = fit_frm(complete_cases(masked), spec)
            out[method] = ReplicationEstimate(curves=_frm_bands(fit, terms, pts))
        elif method == "Mean":
            fit = fit_frm(mean_impute(masked), spec)
            out[method] = ReplicationEstimate(curves=_frm_bands(fit, terms, pts))
        elif method == "fregMICE":
            models: dict = {"z2": SrmSpec(response="z2", scalar_terms=("z1", "z3"),
                                          functional_terms=("Y",), n_basis=30)}
            if masked.column("Y").n_missing:
                models["Y"] = spec
            ispec = ImputationSpec(models=models, m=config.m, v=config.v,
                                   seed=_rep_seed(config.seed, rep))
            run = run_fregmice(masked, ispec)
            fits = [fit_frm(d, spec) for d in run.datasets]
            curves = {}
            for term in terms:
                pooled = pool_functional(fits, term)
                est, lo, hi, _ = pooled_band(pooled, pts)
                curves[term] = (est, lo, hi)
            out[method] = ReplicationEstimate(curves=curves)
        else:
            raise ConfigError(f"unknown method {method!r}")
    return out, missing


def _srm_scalar_band(fit, term: str) -> tuple[float, float, float]:
    est, var = scalar_coefficient(fit, term)
    half = _Q95 * float(np.sqrt(var))
    return est, est - half, est + half


def _srm_replication(config: ScenarioConfig, rep: int, methods) -> tuple[
        dict[str, ReplicationEstimate], dict[str, float]]:
    rng = _rep_rng(config.seed, rep)
    complete, masked = gen_srm_dataset(config, rng)
    spec = SrmSpec(response="y", scalar_terms=("z",), functional_terms=("X",),
                   n_basis=30)
    pts = SIM_GRID.points
    missing = {"X": masked.column("X").n_missing / masked.n}

    def single(dataset) -> ReplicationEstimate:
        fit = fit_srm(dataset, spec)
        est, se = srm_coef(fit, "X", pts)
        return ReplicationEstimate(
            curves={"X": (est, est - _Q95 * se, est + _Q95 * se)},
            scalars={"z": _srm_scalar_band(fit, "z")},
        )

    out: dict[str, ReplicationEstimate] = {}
    for method in methods:
        if method == "ANM":
            out[method] = single(complete)
        elif method == "CCA":
            out[method] = single(complete_cases(masked))
        elif method == "Mean":
            out[method] = single(mean_impute(masked))
        elif method == "fregMICE":
            models = {"X": FrmSpec(response="X", scalar_terms=("z", "y"),
                                   n_basis=20)}
            ispec = ImputationSpec(models=models, m=config.m, v=config.v,
                                   seed=_rep_seed(config.seed, rep))
            run = run_fregmice(masked, ispec)
            fits = [fit_srm(d, spec) for d in run.datasets]
            pooled = pool_functional(fits, "X")
            est, lo, hi, _ = pooled_band(pooled, pts)
            ests, vars_ = zip(*(scalar_coefficient(f, "z") for f in fits))
            pest, _, plo, phi = pool_scalar(ests, vars_)
            out[method] = ReplicationEstimate(curves={"X": (est, lo, hi)},
                                              scalars={"z": (pest, plo, phi)})
        else:
            raise ConfigError(f"unknown method {method!r}")
    return out, missing


def run_experiment(config: ScenarioConfig,
                   methods=METHODS) -> MetricReport:
    """Full Monte Carlo study: generate, mask, apply each method, aggregate."""
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    results: dict[str, list[ReplicationEstimate]] = {m: [] for m in methods}
    missing_acc: dict[str, list[float]] = {}
    replicate = _frm_replication if config.study == "frm-sim" else _srm_replication
    for rep in range(config.replications):
        per_method, missing = replicate(config, rep, methods)
        for m in methods:
            results[m].append(per_method[m])
        for name, frac in missing.items():
            missing_acc.setdefault(name, []).append(frac)

    pts = SIM_GRID.points
    if config.study == "frm-sim":
        betas = true_coefficients(config.parameter_set, SIM_GRID)
        truth_curves = {"intercept": betas[0].values, "z1": betas[1].values,
                        "z2": betas[2].values, "z3": betas[3].values}
        truth_scalars: dict[str, float] = {}
    else:
        truth_curves = {"X": srm_true_beta(SIM_GRID)}
        truth_scalars = {"z": 1.0}
    realized = {name: float(np.mean(vals)) for name, vals in missing_acc.items()}
    return evaluate_estimates(results, truth_curves, truth_scalars, pts,
                              config.study, realized, config)


# ---------------------------------------------------------------------------
# Flat rows for CSV emission
# ---------------------------------------------------------------------------

def metrics_rows(report: MetricReport) -> list[tuple]:
    """Long format: (method, coefficient, t, statistic, value)."""
    rows = []
    for method, mm in report.methods.items():
        for coef, cm in mm.curves.items():
            for stat, arr in (("pwSB", cm.pw_sb), ("pwCov", cm.pw_cov),
                              ("pwWidth", cm.pw_width)):
                for t, v in zip(report.grid, arr):
                    rows.append((method, coef, float(t), stat, float(v)))
    return rows


def summary_rows(report: MetricReport) -> list[tuple]:
    """Across-the-function means plus scalar metrics: (method, coefficient,
    statistic, value)."""
    rows = []
    for method, mm in report.methods.items():
        for coef, cm in mm.curves.items():
            rows.append((method, coef, "mean_abs_pwSB", cm.mean_abs_sb))
            rows.append((method, coef, "mean_pwCov", cm.mean_cov))
            rows.append((method, coef, "mean_pwWidth", cm.mean_width))
        for coef, sm in mm.scalars.items():
            rows.append((method, coef, "mse", sm.mse))
            rows.append((method, coef, "std_bias", sm.std_bias))
            rows.append((method, coef, "coverage", sm.coverage))
            rows.append((method, coef, "width", sm.width))
    for name, frac in report.realized_missingness.items():
        rows.append(("-", name, "realized_missingness", frac))
    return rows
