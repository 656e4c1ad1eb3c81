"""Exact Hessian spectra, risk bounds, and double-descent sweeps for small MLPs.

The package trains small feedforward networks, assembles their exact loss
Hessians split into the Jacobian-sandwiched outer term and the
residual-weighted functional term, and follows the smallest non-zero
Hessian eigenvalue, influence-function leave-one-out estimates, and
population-risk bounds across the interpolation threshold.
"""

from .data import Dataset, gen_classification, gen_redundant_regression, load_csv, save_csv
from .exceptions import (
    CapacityError,
    CollapseError,
    ConfigError,
    DataError,
    LeverageError,
    NumericError,
)
from .hessian import HessianParts, assemble, grad_covariance, jac_covariance, rank_law_check
from .linalg import SpectrumSummary, spectrum_of, summarize_spectrum, sym_eig
from .loo import (
    LooReport,
    brute_force_loo,
    hat_matrix,
    loo_influence,
    loo_linear,
    loo_nn,
    loo_ols_exact,
)
from .network import MlpParams, MlpSpec, batch_forward, init_params, jacobian
from .risk import (
    BoundInputs,
    LowerBound,
    complexity_term,
    estimate_bound_inputs,
    lower_bound,
    lower_bound_complexity,
    trace_capture,
    upper_bound_complexity,
)
from .rmt import EdgeCheck, edge_check, fit_edge_constant
from .sweep import SweepConfig, redundancy_sweep, width_sweep
from .train import AssumptionReport, SgdSchedule, ShallowMlp, assumption_report, sgd_train

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "BoundInputs",
    "CapacityError",
    "CollapseError",
    "ConfigError",
    "DataError",
    "Dataset",
    "EdgeCheck",
    "HessianParts",
    "LeverageError",
    "LooReport",
    "LowerBound",
    "MlpParams",
    "MlpSpec",
    "NumericError",
    "SgdSchedule",
    "ShallowMlp",
    "SpectrumSummary",
    "SweepConfig",
    "assemble",
    "assumption_report",
    "batch_forward",
    "brute_force_loo",
    "complexity_term",
    "edge_check",
    "estimate_bound_inputs",
    "fit_edge_constant",
    "gen_classification",
    "gen_redundant_regression",
    "grad_covariance",
    "hat_matrix",
    "init_params",
    "jac_covariance",
    "jacobian",
    "load_csv",
    "loo_influence",
    "loo_linear",
    "loo_nn",
    "loo_ols_exact",
    "lower_bound",
    "lower_bound_complexity",
    "rank_law_check",
    "redundancy_sweep",
    "save_csv",
    "sgd_train",
    "spectrum_of",
    "summarize_spectrum",
    "sym_eig",
    "trace_capture",
    "upper_bound_complexity",
    "width_sweep",
]
