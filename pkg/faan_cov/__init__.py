# faan_cov/__init__.py

# Low-rank plus diagonal covariance estimation R = SS^T + Sigma.

from faan_cov.core.covmodel import (
    FactorFit,
    SampleCov,
    SigmaInit,
    SolverConfig,
    gaussian_loss,
    sample_covariance,
)
from faan_cov.solvers import FitRequest, Method, fit

__version__ = "0.1.0"

__all__ = [
    "FactorFit",
    "FitRequest",
    "Method",
    "SampleCov",
    "SigmaInit",
    "SolverConfig",
    "fit",
    "gaussian_loss",
    "sample_covariance",
]
