# fnm.py

# Frobenius-norm alternating minimization of ||R_hat - SS^T - Sigma||_F
# - fnm_o: Sigma = diag(R_hat - SS^T), may go negative (reported as infeasible)
# - fnm:   same step followed by clamping negative variances to zero
# The SS^T step keeps the r algebraically largest eigenpairs of R_hat - Sigma.

import logging
from typing import NamedTuple

import numpy as np

from faan_cov.core.covmodel import (
    FactorFit,
    Matrix,
    Vector,
    diag0,
    frobenius_loss,
    initial_sigma_sq,
    is_psd,
)
from faan_cov.core.utils import sorted_eigh
from faan_cov.errors import InvalidInputError
from faan_cov.solvers.base import FitRequest, Method, Solver

logger = logging.getLogger(__name__)

EXACT_FIT_RTOL = 1e-12  # residual below this * ||R_hat|| is an exact decomposition


class FnmState(NamedTuple):
    sigma_sq: Vector
    u: Matrix
    e: Vector
    dropped: bool  # a discarded eigenvalue outweighed a kept one

    @property
    def ssT(self) -> Matrix:
        return (self.u * self.e) @ self.u.T


def truncated_eig(m: Matrix, rank: int) -> tuple[Matrix, Vector, bool]:
    w, v = sorted_eigh(m)
    kept, rest = w[:rank], w[rank:]
    dropped = bool(rest.size and np.max(np.abs(rest)) > np.min(np.abs(kept)))
    return v[:, :rank], kept, dropped


class FnmSolver(Solver):
    method = Method.FNM
    clamp = True

    def __init__(self, req: FitRequest):
        super().__init__(req)
        self.loss_floor = EXACT_FIT_RTOL * float(np.linalg.norm(self.scm.entries))

    def initial_state(self) -> FnmState:
        n = self.scm.n
        s0 = initial_sigma_sq(self.scm, self.config, self.rank)
        return FnmState(s0, np.zeros((n, 0)), np.zeros(0), False)

    def step(self, state: FnmState) -> FnmState:
        u, e, dropped = truncated_eig(self.scm.entries - np.diag(state.sigma_sq), self.rank)
        ssT = (u * e) @ u.T
        sigma_sq = np.diag(self.scm.entries - ssT).copy()
        if self.clamp:
            sigma_sq = np.clip(sigma_sq, 0.0, None)
        return FnmState(sigma_sq, u, e, dropped)

    def loss(self, state: FnmState) -> float:
        return frobenius_loss(self.scm, state.ssT, state.sigma_sq)

    def build_fit(self, state, trace, iterations, converged) -> FactorFit:
        ssT = state.ssT
        feasible = bool(np.all(state.sigma_sq >= 0.0) and is_psd(ssT))
        if not feasible:
            logger.warning(
                "%s: infeasible fit (min sigma^2 = %.4g, min kept eigenvalue = %.4g)",
                self.method,
                float(np.min(state.sigma_sq)),
                float(np.min(state.e)) if state.e.size else 0.0,
            )
        if state.dropped:
            logger.info("%s: a discarded eigenvalue of R - Sigma exceeds a kept one in magnitude", self.method)
        return FactorFit(
            method=str(self.method),
            u=state.u,
            lam=state.e,
            sigma_sq=state.sigma_sq,
            ssT=ssT,
            loss_trace=trace,
            iterations=iterations,
            converged=converged,
            feasible=feasible,
            whitened_basis=False,
            negative_eigs_dropped=state.dropped,
        )


class FnmoSolver(FnmSolver):
    method = Method.FNM_O
    clamp = False


class FnmoVariantSolver(FnmoSolver):
    """
    FNM_o iterated on SS^T alone: SS^T <- r-truncation of diag0(R) + diag(SS^T).

    Sigma is implicit (diag(R - SS^T)). Started from SS^T = 0 it follows
    FNM_o started at Sigma = diag(R) step for step.
    """

    def initial_state(self) -> FnmState:
        n = self.scm.n
        return FnmState(self.scm.diagonal, np.zeros((n, 0)), np.zeros(0), False)

    def step(self, state: FnmState) -> FnmState:
        m = diag0(self.scm.entries) + np.diag(np.diag(state.ssT))
        u, e, dropped = truncated_eig(m, self.rank)
        ssT = (u * e) @ u.T
        return FnmState(np.diag(self.scm.entries - ssT).copy(), u, e, dropped)


def _checked(req: FitRequest, method: Method):
    if req.method is not method:
        raise InvalidInputError(f"{method} fit called with method {req.method}")


def fnmo_fit(req: FitRequest) -> FactorFit:
    _checked(req, Method.FNM_O)
    return FnmoSolver(req).run()


def fnm_fit(req: FitRequest) -> FactorFit:
    _checked(req, Method.FNM)
    return FnmSolver(req).run()


def fnmo_variant_fit(req: FitRequest) -> FactorFit:
    """FNM_o through the SS^T-only iteration; the start is always SS^T = 0."""
    _checked(req, Method.FNM_O)
    return FnmoVariantSolver(req).run()
