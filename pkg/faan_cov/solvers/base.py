# base.py

import logging
from dataclasses import dataclass, field
from faan_cov._compat import StrEnum
from typing import Any

import numpy as np

from faan_cov.core.covmodel import FactorFit, SampleCov, SolverConfig
from faan_cov.errors import InfeasibleModelError, InvalidInputError

logger = logging.getLogger(__name__)


class Method(StrEnum):
    FAAN = "faan"
    FNM = "fnm"
    FNM_O = "fnm_o"
    ISOTROPIC = "isotropic"


@dataclass(frozen=True, eq=False)
class FitRequest:
    scm: SampleCov
    rank: int
    config: SolverConfig = field(default_factory=SolverConfig)
    method: Method = Method.FAAN

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", Method(self.method))
        except ValueError as exc:
            raise InvalidInputError(f"unknown method {self.method!r}") from exc
        if not 1 <= self.rank < self.scm.n:
            raise InvalidInputError(
                f"rank must satisfy 1 <= r < n = {self.scm.n}, got {self.rank}"
            )
        if self.method in (Method.FAAN, Method.ISOTROPIC):
            self.scm.require_positive_diagonal()


def relative_decrease(prev: float, current: float) -> float:
    """(f_prev - f) / f, with the denominator max(|f|, 1) once f <= 0."""
    denom = current if current > 0.0 else max(abs(current), 1.0)
    return (prev - current) / denom


class Solver:
    """
    Alternating minimization driver.

    Subclasses supply the start point, one update, the loss of a state and
    the conversion of the final state into a FactorFit. The loop stops when
    the relative loss decrease drops to epsilon (and `settled()` agrees),
    when the loss reaches `loss_floor`, or at max_iter. A step that leaves
    the feasible set or a non-finite loss ends the run on the last good state.
    """

    method: Method
    loss_floor: float | None = None

    def __init__(self, req: FitRequest):
        self.req = req
        self.scm = req.scm
        self.rank = req.rank
        self.config = req.config

    def initial_state(self) -> Any:
        raise NotImplementedError

    def step(self, state: Any) -> Any:
        raise NotImplementedError

    def loss(self, state: Any) -> float:
        raise NotImplementedError

    def build_fit(
        self, state: Any, trace: tuple[float, ...], iterations: int, converged: bool
    ) -> FactorFit:
        raise NotImplementedError

    def settled(self, state: Any) -> bool:
        return True

    def run(self) -> FactorFit:
        state = self.initial_state()
        prev = self.loss(state)
        trace = [prev]
        converged = False
        iterations = 0
        for i in range(1, self.config.max_iter + 1):
            try:
                candidate = self.step(state)
                f = self.loss(candidate)
            except InfeasibleModelError as exc:
                logger.warning("%s: stopping at iteration %d, %s", self.method, i, exc)
                break
            if not np.isfinite(f):
                logger.warning("%s: non-finite loss at iteration %d, stopping", self.method, i)
                break
            state = candidate
            trace.append(f)
            iterations = i
            logger.debug("%s: iteration %d loss %.12g", self.method, i, f)
            if self.loss_floor is not None and f <= self.loss_floor:
                converged = True
                break
            if relative_decrease(prev, f) <= self.config.epsilon and self.settled(state):
                converged = True
                break
            prev = f

        if converged:
            logger.info("%s: converged after %d iterations (loss %.12g)", self.method, iterations, trace[-1])
        elif iterations == self.config.max_iter:
            logger.warning("%s: hit max_iter = %d without converging", self.method, iterations)
        return self.build_fit(state, tuple(trace), iterations, converged)
