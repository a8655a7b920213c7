# solvers/__init__.py

# Fitting procedures for R = SS^T + Sigma
# - base.py: FitRequest, Method, Solver loop and stopping rule
# - faan.py: coordinate-descent ML
# - fnm.py: Frobenius alternating minimization (fnm_o, fnm)
# - isotropic.py: closed-form ML with Sigma = sigma^2 I

from collections.abc import Callable

from faan_cov.core.covmodel import FactorFit
from faan_cov.solvers.base import FitRequest, Method
from faan_cov.solvers.faan import faan_fit
from faan_cov.solvers.fnm import fnm_fit, fnmo_fit, fnmo_variant_fit
from faan_cov.solvers.isotropic import isotropic_ml

FITTERS: dict[Method, Callable[[FitRequest], FactorFit]] = {
    Method.FAAN: faan_fit,
    Method.FNM: fnm_fit,
    Method.FNM_O: fnmo_fit,
    Method.ISOTROPIC: lambda req: isotropic_ml(req.scm, req.rank),
}


def fit(req: FitRequest) -> FactorFit:
    """Run the solver named by req.method."""
    return FITTERS[req.method](req)


__all__ = [
    "FitRequest",
    "Method",
    "faan_fit",
    "fit",
    "fnm_fit",
    "fnmo_fit",
    "fnmo_variant_fit",
    "isotropic_ml",
]
