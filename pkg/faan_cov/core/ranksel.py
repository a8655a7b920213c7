# ranksel.py

# Number-of-factors selection by BIC:
#   BIC(r) = N * gaussian_loss + n_m(r) * ln(N n)
# Ranks whose fitted covariance is singular score +inf in a scan.

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from faan_cov import settings
from faan_cov.core.bounds import param_counts
from faan_cov.core.covmodel import FactorFit, SampleCov, SolverConfig, gaussian_loss
from faan_cov.core.utils import parallel_map
from faan_cov.errors import InfeasibleModelError, InvalidInputError
from faan_cov.solvers import FitRequest, Method, faan_fit

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RankScan:
    candidates: tuple[int, ...]
    scores: tuple[float, ...]
    fits: tuple[FactorFit, ...]
    chosen: int
    n_obs: int
    config: SolverConfig

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "rank": list(self.candidates),
                "bic": list(self.scores),
                "loss": [f.loss for f in self.fits],
                "iterations": [f.iterations for f in self.fits],
                "converged": [f.converged for f in self.fits],
            }
        )

    def to_report(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "scores": list(self.scores),
            "chosen": self.chosen,
            "N": self.n_obs,
            "converged": [f.converged for f in self.fits],
            "config": self.config.to_dict(),
        }


def default_r_max(n: int) -> int:
    return min(settings.R_MAX, n - 1)


def bic_score(scm: SampleCov, fit: FactorFit, n_obs: int) -> float:
    """
    N * gaussian_loss(scm, SS^T, Sigma) of a likelihood fit plus n_m(r) ln(N n).

    Raises InfeasibleModelError when the fitted covariance is singular.
    """
    if fit.method not in (Method.FAAN, Method.ISOTROPIC):
        raise InvalidInputError(f"BIC needs a Gaussian-loss fit, got {fit.method}")
    if fit.n != scm.n:
        raise InvalidInputError(f"fit is {fit.n}-dimensional, scm is {scm.n}-dimensional")
    if n_obs < 1:
        raise InvalidInputError(f"N must be >= 1, got {n_obs}")
    n_m, _ = param_counts(scm.n, fit.rank)
    data_term = n_obs * gaussian_loss(scm, fit.ssT, fit.sigma_sq)
    return data_term + n_m * math.log(n_obs * scm.n)


def _scan_score(scm: SampleCov, fit: FactorFit, n_obs: int) -> float:
    try:
        return bic_score(scm, fit, n_obs)
    except InfeasibleModelError as exc:
        logger.warning("rank %d left out of the scan: %s", fit.rank, exc)
        return math.inf


def select_rank(
    scm: SampleCov,
    n_obs: int,
    r_max: int | None = None,
    config: SolverConfig | None = None,
    workers: int | None = None,
) -> RankScan:
    """Fit FAAN for every r in [1, r_max] independently and keep the BIC minimizer."""
    if r_max is None:
        r_max = default_r_max(scm.n)
    if not 1 <= r_max < scm.n:
        raise InvalidInputError(f"r_max must satisfy 1 <= r_max < n = {scm.n}, got {r_max}")
    config = config or SolverConfig()
    candidates = tuple(range(1, r_max + 1))

    def fit_rank(r: int) -> FactorFit:
        return faan_fit(FitRequest(scm, r, config, Method.FAAN))

    fits = tuple(parallel_map(fit_rank, candidates, workers))
    scores = tuple(_scan_score(scm, f, n_obs) for f in fits)
    chosen = candidates[int(np.argmin(scores))]
    logger.info("rank scan over 1..%d (N=%d): chose r=%d", r_max, n_obs, chosen)
    return RankScan(candidates, scores, fits, chosen, n_obs, config)
