"""Gaussian mixture copulas for flexible extremal dependence.

The package fits finite mixtures of Gaussian distributions on the copula
scale and measures their tail dependence through χ, η and λ.
"""

from gmcopula.dependence import (
    DependenceCurve,
    RayWeights,
    aw_probability_empirical,
    aw_probability_model,
    aw_thresholds,
    bootstrap_band,
    chi_empirical,
    chi_model,
    conditional_exceedance,
    construction_chi_limit,
    default_r_grid,
    eta_empirical,
    eta_model,
    gaussian_eta_limit,
    lambda_model,
    model_curves,
    precision_report,
)
from gmcopula.estimator import GaussianMixtureCopula, RankTransformer
from gmcopula.exceptions import (
    ConstraintViolation,
    DegenerateFitError,
    DimensionError,
    DomainError,
    NotPositiveDefiniteError,
)
from gmcopula.inference import (
    FitOptions,
    FitResult,
    aic,
    check_constraints,
    compare,
    count_parameters,
    fit,
    log_likelihood,
    pack,
    pairwise_initialize,
    unpack,
)
from gmcopula.io import Dataset, load_csv, rank_transform
from gmcopula.model import (
    MixtureParameters,
    copula_joint_survivor,
    copula_log_density,
    marginal_quantile,
    simulate,
)
from gmcopula.numerics import CorrelationMatrix, mvn_cdf, mvn_survivor

__version__ = "0.1.0"

__all__ = [
    "ConstraintViolation",
    "CorrelationMatrix",
    "Dataset",
    "DegenerateFitError",
    "DependenceCurve",
    "DimensionError",
    "DomainError",
    "FitOptions",
    "FitResult",
    "GaussianMixtureCopula",
    "MixtureParameters",
    "NotPositiveDefiniteError",
    "RankTransformer",
    "RayWeights",
    "aic",
    "aw_probability_empirical",
    "aw_probability_model",
    "aw_thresholds",
    "bootstrap_band",
    "check_constraints",
    "chi_empirical",
    "chi_model",
    "compare",
    "conditional_exceedance",
    "construction_chi_limit",
    "copula_joint_survivor",
    "copula_log_density",
    "count_parameters",
    "default_r_grid",
    "eta_empirical",
    "eta_model",
    "fit",
    "gaussian_eta_limit",
    "lambda_model",
    "load_csv",
    "log_likelihood",
    "marginal_quantile",
    "model_curves",
    "mvn_cdf",
    "mvn_survivor",
    "pack",
    "pairwise_initialize",
    "precision_report",
    "rank_transform",
    "simulate",
    "unpack",
]
