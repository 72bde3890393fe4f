"""Cox proportional-hazards regression stabilized by synthetic-data priors."""

from .cox import (
    log_partial_likelihood,
    mple,
    pl_derivatives,
    prediction_score,
    predictive_deviance,
    wald_intervals,
)
from .data import FitResult, RiskIndex, SurvivalDataset
from .estimators import MergedWeightedData, cre, lasso, ridge, wme
from .synthesis import (
    CatalyticPrior,
    CovariateGenSchema,
    SyntheticDataset,
    build_catalytic_prior,
    compute_kappa,
    fit_exponential,
    generate_synthetic_covariates,
    generate_synthetic_times,
    log_adaptive_prior,
    log_catalytic_prior,
    log_catalytic_prior_derivatives,
    norm_recoverability_check,
)
from .tuning import CVConfig, cvpl

__all__ = [
    "SurvivalDataset",
    "RiskIndex",
    "FitResult",
    "log_partial_likelihood",
    "pl_derivatives",
    "mple",
    "wald_intervals",
    "predictive_deviance",
    "prediction_score",
    "SyntheticDataset",
    "CatalyticPrior",
    "CovariateGenSchema",
    "fit_exponential",
    "generate_synthetic_covariates",
    "generate_synthetic_times",
    "log_catalytic_prior",
    "log_catalytic_prior_derivatives",
    "compute_kappa",
    "log_adaptive_prior",
    "norm_recoverability_check",
    "build_catalytic_prior",
    "MergedWeightedData",
    "cre",
    "wme",
    "ridge",
    "lasso",
    "CVConfig",
    "cvpl",
]

__version__ = "0.1.0"
