# isotropic.py

# Closed-form ML fit for Sigma = sigma^2 I (probabilistic PCA).

import logging

import numpy as np

from faan_cov.core.covmodel import FactorFit, SampleCov, gaussian_loss
from faan_cov.core.utils import sorted_eigh
from faan_cov.errors import InfeasibleModelError, InvalidInputError

logger = logging.getLogger(__name__)


def isotropic_ml(scm: SampleCov, rank: int) -> FactorFit:
    """
    sigma^2 = mean of the n - r trailing eigenvalues of R_hat, U = the r
    leading eigenvectors and lambda_k = rho_k / sigma^2 - 1.
    """
    n = scm.n
    if not 1 <= rank < n:
        raise InvalidInputError(f"rank must satisfy 1 <= r < n = {n}, got {rank}")
    rho, v = sorted_eigh(scm.entries)
    s2 = float(np.mean(rho[rank:]))
    if not s2 > 0.0:
        raise InfeasibleModelError("isotropic fit needs a positive definite sample covariance")
    u = v[:, :rank]
    lam = np.clip(rho[:rank] / s2 - 1.0, 0.0, None)
    ssT = s2 * (u * lam) @ u.T
    sigma_sq = np.full(n, s2)
    loss = gaussian_loss(scm, ssT, sigma_sq)
    logger.debug("isotropic: sigma^2 = %.6g, loss %.12g", s2, loss)
    return FactorFit(
        method="isotropic",
        u=u,
        lam=lam,
        sigma_sq=sigma_sq,
        ssT=ssT,
        loss_trace=(loss,),
        iterations=0,
        converged=True,
        feasible=True,
    )
