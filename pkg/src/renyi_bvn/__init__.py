"""Robust estimation and Wald-type testing for the bivariate normal model
via minimum Renyi pseudodistance estimators."""
from .errors import ConditioningError, ConstraintError, DegenerateSampleError, DomainError
from .estimator import EstimateTrace, PairedSample, fit, fit_alphas, irm_fit, mle
from .model import ModelBlocks, Theta, blocks

__all__ = [
    "ConditioningError", "ConstraintError", "DegenerateSampleError", "DomainError",
    "EstimateTrace", "ModelBlocks", "PairedSample", "Theta",
    "blocks", "fit", "fit_alphas", "irm_fit", "mle",
]
__version__ = "0.1.0"
