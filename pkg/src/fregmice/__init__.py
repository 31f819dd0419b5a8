"""Multiple imputation and penalized regression for mixed scalar/functional data.

The pieces, roughly bottom-up:

- ``fdgrid``   grids and densely observed curves
- ``basis``    clamped cubic B-splines with difference penalties
- ``fpca``     functional principal components on dense grids
- ``penreg``   penalized Gaussian / Bernoulli fits with REML smoothing
- ``frm``      function-on-scalar (and function-on-function) regression
- ``srm``      scalar-on-function regression through FPCA scores
- ``mice``     chained-equation imputation producing M completed datasets
- ``pool``     Rubin's Rules for scalar and basis-coefficient estimates
- ``simlab``   the Monte Carlo recovery studies
- ``cli``      the ``fregmice`` command
"""
from .basis import BSplineBasis
from .dataset import (Column, MixedDataset, functional_column, read_csv,
                      read_sidecar, scalar_column, write_csv, write_sidecar)
from .errors import (ConfigError, DataError, DimensionError, DomainError,
                     FitError, FregmiceError, IncompatibilityError,
                     IncompleteDataError, InsufficientDataError,
                     InvalidGridError, RankError, UnimputableColumnError)
from .fdgrid import FunctionalSample, Grid, uniform_grid
from .fpca import FpcaDecomposition, fit_fpca, project_scores
from .frm import FrmFit, FrmSpec, fit_frm, predict_frm
from .frm import coefficient_function as frm_coefficient_function
from .mice import (ImputationRun, ImputationSpec, run_fregmice,
                   stream_diagnostics)
from .penreg import DesignBlock, PenalizedFit, fit_bernoulli, fit_gaussian
from .pool import (PooledCoefficient, pool_coefficients, pool_functional,
                   pool_scalar, pooled_band)
from .simlab import (METHODS, ScenarioConfig, gen_frm_dataset, gen_srm_dataset,
                     run_experiment)
from .srm import SrmFit, SrmSpec, fit_srm, predict_srm
from .srm import coefficient_function as srm_coefficient_function

__version__ = "0.1.0"

__all__ = [
    "BSplineBasis",
    "Column",
    "ConfigError",
    "DataError",
    "DesignBlock",
    "DimensionError",
    "DomainError",
    "FitError",
    "FpcaDecomposition",
    "FregmiceError",
    "FrmFit",
    "FrmSpec",
    "FunctionalSample",
    "Grid",
    "ImputationRun",
    "ImputationSpec",
    "IncompatibilityError",
    "IncompleteDataError",
    "InsufficientDataError",
    "InvalidGridError",
    "METHODS",
    "MixedDataset",
    "PenalizedFit",
    "PooledCoefficient",
    "RankError",
    "ScenarioConfig",
    "SrmFit",
    "SrmSpec",
    "UnimputableColumnError",
    "fit_bernoulli",
    "fit_frm",
    "fit_gaussian",
    "fit_srm",
    "fit_fpca",
    "frm_coefficient_function",
    "functional_column",
    "gen_frm_dataset",
    "gen_srm_dataset",
    "pool_coefficients",
    "pool_functional",
    "pool_scalar",
    "pooled_band",
    "predict_frm",
    "predict_srm",
    "project_scores",
    "read_csv",
    "read_sidecar",
    "run_experiment",
    "run_fregmice",
    "scalar_column",
    "srm_coefficient_function",
    "stream_diagnostics",
    "uniform_grid",
    "write_csv",
    "write_sidecar",
]
