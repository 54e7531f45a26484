"""zilda: sparse semiparametric discriminant analysis for zero-inflated data.

The model treats a binary class label and non-negative, zero-inflated
covariates as censored views of a joint latent Gaussian vector.  Rank
statistics recover the latent correlation matrix, an l1-penalized quadratic
program produces a sparse classification direction, and posterior class
probabilities for new observations integrate over the latent coordinates
hidden behind zeros.
"""

__version__ = "0.1.0"

from .classify import (
    ClassifierModel,
    classify_observation,
    posterior_linear,
    posterior_mc,
    predict_matrix,
)
from .direction import LambdaPath, SparseDirection, lambda_path, solve_direction
from .latentcorr import (
    LatentCorrelation,
    ThresholdVector,
    estimate_latent_correlation,
    estimate_thresholds,
    kendall_tau_matrix,
)
from .simgen import SimConfig, generate_joint, generate_mixture
from .transform import MarginalTransform, fit_marginal
from .tune import TuneConfig, cross_validate, fit

__all__ = [
    "ClassifierModel",
    "LambdaPath",
    "LatentCorrelation",
    "MarginalTransform",
    "SimConfig",
    "SparseDirection",
    "ThresholdVector",
    "TuneConfig",
    "classify_observation",
    "cross_validate",
    "estimate_latent_correlation",
    "estimate_thresholds",
    "fit",
    "fit_marginal",
    "generate_joint",
    "generate_mixture",
    "kendall_tau_matrix",
    "lambda_path",
    "posterior_linear",
    "posterior_mc",
    "predict_matrix",
    "solve_direction",
]
