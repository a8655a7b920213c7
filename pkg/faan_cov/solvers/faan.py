# faan.py

# FAAN: coordinate descent on the Gaussian loss Tr(R_hat R^-1) + ln|R|.
# Each iteration
#   (a) eigen-step: r principal eigenpairs of the whitened SCM, lambda = max(mu - 1, 0)
#   (b) sigma-step: Gauss-Seidel sweeps, sigma_k = positive root of
#       sigma^2 - b_k sigma - c_k = 0 with Gamma = (I + U Lam U^T)^-1

import logging
from typing import NamedTuple

import numpy as np

from faan_cov import settings
from faan_cov.core.covmodel import (
    FactorFit,
    Matrix,
    SampleCov,
    Vector,
    diagonal_mismatch,
    initial_sigma_sq,
    principal_pairs,
    whiten,
)
from faan_cov.errors import InfeasibleModelError, InvalidInputError
from faan_cov.solvers.base import FitRequest, Method, Solver

logger = logging.getLogger(__name__)


class FaanState(NamedTuple):
    sigma: Vector  # standard deviations
    u: Matrix
    lam: Vector

    @property
    def ssT(self) -> Matrix:
        su = self.sigma[:, None] * self.u
        return (su * self.lam) @ su.T


def faan_eigen_step(scm: SampleCov, sigma: Vector, rank: int) -> tuple[Matrix, Vector]:
    """U and Lambda minimizing the loss for fixed Sigma = diag(sigma^2)."""
    mu, u = principal_pairs(whiten(scm, sigma**2), rank)
    lam = np.where(mu >= 1.0, mu - 1.0, 0.0)
    return u, lam


def gamma_matrix(u: Matrix, lam: Vector) -> Matrix:
    """(I + U Lam U^T)^-1 = I - U diag(lam / (1 + lam)) U^T."""
    n = u.shape[0]
    g = np.eye(n) - (u * (lam / (1.0 + lam))) @ u.T
    return (g + g.T) / 2.0


def positive_root(b: float, c: float) -> float:
    """Positive root of x^2 - b x - c = 0 for c > 0."""
    disc = np.sqrt(b * b + 4.0 * c)
    if b >= 0.0:
        return float((b + disc) / 2.0)
    return float(2.0 * c / (disc - b))


def faan_sigma_sweep(
    scm: SampleCov,
    gamma: Matrix,
    sigma: Vector,
    sweeps: int = settings.INNER_SIGMA_SWEEPS,
    debug_checks: bool = False,
) -> Vector:
    """
    Gauss-Seidel update of every sigma_k, repeated `sweeps` times.

    b_k = sum_{i != k} R_ik Gamma_ik / sigma_i and c_k = R_kk Gamma_kk, with
    sigma_i already updated for i < k.
    """
    h = scm.entries * gamma
    c = np.diag(h).copy()
    if np.any(c <= 0.0):
        raise InfeasibleModelError("sigma update needs R_kk * Gamma_kk > 0")
    sigma = np.array(sigma, dtype=np.float64, copy=True)
    inv = 1.0 / sigma
    for _ in range(sweeps):
        for k in range(sigma.shape[0]):
            b = float(h[k] @ inv - c[k] * inv[k])
            root = positive_root(b, c[k])
            if debug_checks:
                curvature = -root * root + 2.0 * b * root + 3.0 * c[k]
                if curvature < -settings.SECOND_ORDER_ATOL * max(root * root, c[k]):
                    raise AssertionError(
                        f"sigma_{k} update is not a minimum (curvature {curvature:.3e})"
                    )
            sigma[k] = root
            inv[k] = 1.0 / root
    return sigma


def faan_loss(scm: SampleCov, state: FaanState) -> float:
    """
    Gaussian loss of a FAAN state in whitened coordinates:
    Tr(Sigma^-1/2 R_hat Sigma^-1/2 Gamma) + sum ln(1 + lambda) + sum ln sigma^2.

    Equal to gaussian_loss(scm, state.ssT, sigma^2) but needs no Cholesky
    factor of R, so it stays finite while a variance heads to zero.
    """
    sigma_sq = state.sigma**2
    fit_term = float(np.sum(whiten(scm, sigma_sq) * gamma_matrix(state.u, state.lam)))
    return fit_term + float(np.sum(np.log1p(state.lam))) + float(np.sum(np.log(sigma_sq)))


class FaanSolver(Solver):
    method = Method.FAAN

    def initial_state(self) -> FaanState:
        s0 = initial_sigma_sq(self.scm, self.config, self.rank)
        if np.any(~(s0 > 0.0)):
            raise InvalidInputError("FAAN needs strictly positive initial variances")
        n = self.scm.n
        return FaanState(np.sqrt(s0), np.zeros((n, 0)), np.zeros(0))

    def step(self, state: FaanState) -> FaanState:
        u, lam = faan_eigen_step(self.scm, state.sigma, self.rank)
        sigma = faan_sigma_sweep(
            self.scm,
            gamma_matrix(u, lam),
            state.sigma,
            self.config.inner_sigma_sweeps,
            self.config.debug_checks,
        )
        return FaanState(sigma, u, lam)

    def loss(self, state: FaanState) -> float:
        return faan_loss(self.scm, state)

    def settled(self, state: FaanState) -> bool:
        if self.config.diag_tol is None:
            return True
        return diagonal_mismatch(self.scm, state.ssT, state.sigma**2) <= self.config.diag_tol

    def build_fit(self, state, trace, iterations, converged) -> FactorFit:
        sigma_sq = state.sigma**2
        floor = settings.HEYWOOD_SIGMA_SQ * float(np.max(self.scm.diagonal))
        if np.min(sigma_sq) < floor:
            logger.warning(
                "faan: Heywood-like fit, min sigma^2 = %.3e at index %d",
                float(np.min(sigma_sq)),
                int(np.argmin(sigma_sq)),
            )
        return FactorFit(
            method=str(self.method),
            u=state.u,
            lam=state.lam,
            sigma_sq=sigma_sq,
            ssT=state.ssT,
            loss_trace=trace,
            iterations=iterations,
            converged=converged,
            feasible=bool(np.all(sigma_sq > 0.0)),
        )


def faan_fit(req: FitRequest) -> FactorFit:
    if req.method is not Method.FAAN:
        raise InvalidInputError(f"faan_fit called with method {req.method}")
    return FaanSolver(req).run()
