"""pdclone: global maximum-likelihood estimation for ODE models via
particle data cloning (annealed SMC on k-cloned posteriors), with an MCMC
data-cloning baseline and clone-ladder diagnostics.
"""

from .data import Dataset, load_dataset, save_dataset
from .dc import DcConfig, DcResult, dc_run
from .engine import (
    FitSummary,
    PdcResult,
    ScheduleConfig,
    ScheduleError,
    pdc_run,
)
from .harness import (
    StudyReport,
    bimodality_report,
    coverage_study,
    fit_metrics,
    kernel_benchmark,
    prior_for,
    simulate,
    simulate_default,
    truth_for,
)
from .kernels import KernelConfig
from .ladder import LadderConfig, LadderReport, ladder_run, ladder_run_generic
from .models import ModelSpec, get_model, model_names, register_model
from .params import ParamLayout
from .prob import (
    GaussianReference,
    OdeTarget,
    PriorSpec,
    default_prior,
    log_likelihood,
)
from .solver import SolverConfig, Trajectory, solve

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DcConfig",
    "DcResult",
    "FitSummary",
    "GaussianReference",
    "KernelConfig",
    "LadderConfig",
    "LadderReport",
    "ModelSpec",
    "OdeTarget",
    "ParamLayout",
    "PdcResult",
    "PriorSpec",
    "ScheduleConfig",
    "ScheduleError",
    "SolverConfig",
    "StudyReport",
    "Trajectory",
    "bimodality_report",
    "coverage_study",
    "dc_run",
    "default_prior",
    "fit_metrics",
    "get_model",
    "kernel_benchmark",
    "ladder_run",
    "ladder_run_generic",
    "load_dataset",
    "log_likelihood",
    "model_names",
    "pdc_run",
    "prior_for",
    "register_model",
    "save_dataset",
    "simulate",
    "simulate_default",
    "truth_for",
    "solve",
]
