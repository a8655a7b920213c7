# portfolio.py

# Minimum-variance portfolios
# - weights R^-1 1 / (1^T R^-1 1) from a covariance estimate
# - rolling backtest: estimate on the trailing window, hold for the horizon
# - synthetic factor returns with a known covariance

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from faan_cov._compat import StrEnum
from typing import Any, NamedTuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from faan_cov import settings
from faan_cov.core.covmodel import Matrix, SampleCov, SolverConfig, Vector, sample_covariance
from faan_cov.core.ranksel import select_rank
from faan_cov.core.utils import parallel_map
from faan_cov.errors import InsufficientDataError, InvalidInputError, SingularMatrixError
from faan_cov.solvers import FitRequest, faan_fit

logger = logging.getLogger(__name__)


class Estimator(StrEnum):
    FAAN_BIC = "faan_bic"
    SCM = "scm"
    EQUAL_WEIGHT = "equal_weight"


class SingularPolicy(StrEnum):
    PINV = "pinv"  # pseudo-inverse weights, date flagged
    SKIP = "skip"  # no weights, date flagged and left out of the median


@dataclass(frozen=True)
class BacktestSpec:
    lookback_n: int
    rebalance_days: int = settings.REBALANCE_DAYS
    horizon_days: int = settings.HORIZON_DAYS
    estimator: Estimator = Estimator.FAAN_BIC
    r_max: int = settings.R_MAX
    singular_policy: SingularPolicy = SingularPolicy.PINV
    sample_std: bool = False  # divide by horizon - 1 instead of horizon
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        try:
            object.__setattr__(self, "estimator", Estimator(self.estimator))
            object.__setattr__(self, "singular_policy", SingularPolicy(self.singular_policy))
        except ValueError as exc:
            raise InvalidInputError(str(exc)) from exc
        if self.lookback_n < 2:
            raise InvalidInputError(f"lookback_n must be >= 2, got {self.lookback_n}")
        for name in ("rebalance_days", "horizon_days", "r_max"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.sample_std and self.horizon_days < 2:
            raise InvalidInputError("sample_std needs horizon_days >= 2")


class DateRecord(NamedTuple):
    day: int  # first out-of-sample row
    std: float  # nan when skipped
    weights: Vector | None
    rank: int | None  # BIC-selected rank (faan_bic only)
    singular: bool
    skipped: bool


@dataclass(frozen=True, eq=False)
class BacktestResult:
    spec: BacktestSpec
    records: tuple[DateRecord, ...]
    median_std: float

    @property
    def per_date_std(self) -> tuple[float, ...]:
        return tuple(r.std for r in self.records if not r.skipped)

    @property
    def weights_log(self) -> tuple[Vector, ...]:
        return tuple(r.weights for r in self.records if r.weights is not None)

    def to_report(self) -> dict[str, Any]:
        return {
            "lookback_N": self.spec.lookback_n,
            "estimator": str(self.spec.estimator),
            "median_std": self.median_std,
            "dates": [r.day for r in self.records],
            "per_date_std": [r.std for r in self.records],
            "ranks": [r.rank for r in self.records],
            "singular": [r.singular for r in self.records],
            "skipped": [r.skipped for r in self.records],
        }


class FactorModel(NamedTuple):
    ssT: Matrix
    sigma_sq: Vector
    loadings: Matrix

    @property
    def covariance(self) -> Matrix:
        return self.ssT + np.diag(self.sigma_sq)


def min_variance_weights(cov: ArrayLike) -> Vector:
    """Minimizer of w^T R w subject to sum(w) = 1."""
    r = np.asarray(cov, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InvalidInputError(f"covariance must be square, got shape {r.shape}")
    r = (r + r.T) / 2.0
    eig = linalg.eigvalsh(r)
    if eig[0] <= 0.0 or eig[0] / eig[-1] < settings.SINGULAR_RCOND:
        raise SingularMatrixError(
            f"covariance is singular or indefinite (eigenvalues {eig[0]:.3e} .. {eig[-1]:.3e})"
        )
    x = linalg.cho_solve(linalg.cho_factor(r), np.ones(r.shape[0]))
    return x / np.sum(x)


def pinv_weights(cov: ArrayLike) -> Vector:
    """R^+ 1 normalized to sum 1; equal weights when R^+ 1 sums to zero."""
    r = np.asarray(cov, dtype=np.float64)
    n = r.shape[0]
    x = linalg.pinv((r + r.T) / 2.0) @ np.ones(n)
    total = float(np.sum(x))
    if abs(total) <= np.finfo(np.float64).eps * max(float(np.max(np.abs(x))), 1.0):
        return np.full(n, 1.0 / n)
    return x / total


def rebalance_days(n_days: int, spec: BacktestSpec) -> list[int]:
    """First out-of-sample row of every investment date with a full horizon ahead."""
    if n_days < spec.lookback_n + spec.horizon_days:
        raise InsufficientDataError(
            f"{n_days} days cannot cover lookback {spec.lookback_n} + horizon {spec.horizon_days}"
        )
    return list(range(spec.lookback_n, n_days - spec.horizon_days + 1, spec.rebalance_days))


def _estimate_weights(window: Matrix, spec: BacktestSpec) -> tuple[Vector | None, int | None, bool]:
    n_obs, n = window.shape
    if spec.estimator is Estimator.EQUAL_WEIGHT:
        return np.full(n, 1.0 / n), None, False
    scm = sample_covariance(window.T)
    rank = None
    match spec.estimator:
        case Estimator.SCM:
            cov = scm.entries
        case Estimator.FAAN_BIC if np.any(scm.diagonal <= 0.0):
            # an asset with no variance in the window: no factor model to fit
            logger.info("zero-variance asset in the window, FAAN estimate unavailable")
            cov = scm.entries
        case Estimator.FAAN_BIC:
            r_cap = min(spec.r_max, n_obs - 1, n - 1)
            scan = select_rank(scm, n_obs, r_cap, spec.config, workers=1)
            cov, rank = scan.fits[scan.chosen - 1].covariance, scan.chosen
        case _:
            raise InvalidInputError(f"unhandled estimator {spec.estimator!r}")
    try:
        return min_variance_weights(cov), rank, False
    except SingularMatrixError:
        if spec.singular_policy is SingularPolicy.SKIP:
            return None, rank, True
        return pinv_weights(cov), rank, True


def run_backtest(
    returns: ArrayLike | pd.DataFrame, spec: BacktestSpec, workers: int | None = None
) -> BacktestResult:
    """
    Re-estimate the covariance every `rebalance_days` from the trailing
    `lookback_n` rows (no mean removal) and score the out-of-sample
    standard deviation of the next `horizon_days` portfolio returns.
    """
    x = np.asarray(returns, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise InvalidInputError(f"returns must be a T x n matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("returns contain non-finite values")
    days = rebalance_days(x.shape[0], spec)
    ddof = 1 if spec.sample_std else 0

    def evaluate(day: int) -> DateRecord:
        window = x[day - spec.lookback_n : day]
        weights, rank, singular = _estimate_weights(window, spec)
        if weights is None:
            logger.info("day %d: singular covariance estimate, date skipped", day)
            return DateRecord(day, float("nan"), None, rank, singular, True)
        held = x[day : day + spec.horizon_days] @ weights
        return DateRecord(day, float(np.std(held, ddof=ddof)), weights, rank, singular, False)

    records = tuple(parallel_map(evaluate, days, workers))
    kept = [r.std for r in records if not r.skipped]
    if not kept:
        logger.warning("every investment date was skipped")
    median = float(np.median(kept)) if kept else float("nan")
    logger.info(
        "backtest %s lookback=%d: %d dates, median std %.6g",
        spec.estimator,
        spec.lookback_n,
        len(records),
        median,
    )
    return BacktestResult(spec, records, median)


def lookback_sweep(
    returns: ArrayLike | pd.DataFrame,
    lookbacks: Sequence[int] = settings.LOOKBACKS,
    estimators: Sequence[Estimator | str] = tuple(Estimator),
    base: BacktestSpec | None = None,
    workers: int | None = None,
) -> pd.DataFrame:
    """(lookback_N, estimator, median_std) for every pair."""
    base = base or BacktestSpec(lookback_n=min(lookbacks))
    rows = []
    for lookback in lookbacks:
        for estimator in estimators:
            spec = replace(base, lookback_n=int(lookback), estimator=Estimator(estimator))
            result = run_backtest(returns, spec, workers)
            rows.append(
                {
                    "lookback_N": int(lookback),
                    "estimator": str(spec.estimator),
                    "median_std": result.median_std,
                }
            )
    return pd.DataFrame(rows, columns=["lookback_N", "estimator", "median_std"])


def _draw_model(rng: np.random.Generator, n: int, r: int, snr_db: float) -> FactorModel:
    s = rng.standard_normal((n, r))
    sigma_sq = rng.uniform(0.0, 1.0, n)
    ssT = s @ s.T
    if r > 0:
        signal_power = float(np.trace(ssT))
        sigma_sq = sigma_sq * (signal_power / (float(np.sum(sigma_sq)) * 10.0 ** (snr_db / 10.0)))
    return FactorModel(ssT, sigma_sq, s)


def _check_synth_args(n: int, r: int, seed: int):
    if n < 1 or not 0 <= r < n:
        raise InvalidInputError(f"need 0 <= r < n, got n={n}, r={r}")
    if seed < 0:
        raise InvalidInputError(f"seed must be >= 0, got {seed}")


def synth_factor_model(n: int, r: int, snr_db: float, seed: int) -> FactorModel:
    """Ground truth behind synth_factor_returns for the same arguments."""
    _check_synth_args(n, r, seed)
    return _draw_model(np.random.default_rng(seed), n, r, snr_db)


def synth_factor_returns(n: int, r: int, snr_db: float, n_days: int, seed: int) -> NDArray[np.float64]:
    """n_days x n Gaussian returns with covariance SS^T + Sigma (SNR as Tr(SS^T) / sum sigma^2)."""
    _check_synth_args(n, r, seed)
    if n_days < 1:
        raise InvalidInputError(f"n_days must be >= 1, got {n_days}")
    rng = np.random.default_rng(seed)
    model = _draw_model(rng, n, r, snr_db)
    factors = rng.standard_normal((n_days, r))
    noise = rng.standard_normal((n_days, n)) * np.sqrt(model.sigma_sq)[None, :]
    return factors @ model.loadings.T + noise


def normalized_error(truth: ArrayLike, estimate: ArrayLike) -> float:
    """||R_true - R_hat||_F / ||R_true||_F."""
    t = np.asarray(truth, dtype=np.float64)
    e = np.asarray(estimate, dtype=np.float64)
    if t.shape != e.shape:
        raise InvalidInputError(f"shape mismatch: {t.shape} vs {e.shape}")
    return float(np.linalg.norm(t - e) / np.linalg.norm(t))


def covariance_error_study(
    n: int,
    r: int,
    snr_db: float,
    n_obs: int,
    seeds: Sequence[int],
    rank: int | None = None,
    config: SolverConfig | None = None,
    workers: int | None = None,
) -> pd.DataFrame:
    """
    Normalized Frobenius error of the FAAN covariance and of the SCM on
    synthetic returns, one row per seed. rank=None selects r by BIC.
    """
    config = config or SolverConfig()

    def one(seed: int) -> dict[str, float]:
        truth = synth_factor_model(n, r, snr_db, seed).covariance
        scm: SampleCov = sample_covariance(synth_factor_returns(n, r, snr_db, n_obs, seed).T)
        if rank is None:
            scan = select_rank(scm, n_obs, min(settings.R_MAX, n_obs - 1, n - 1), config, workers=1)
            fit, chosen = scan.fits[scan.chosen - 1], scan.chosen
        else:
            fit, chosen = faan_fit(FitRequest(scm, rank, config)), rank
        return {
            "seed": seed,
            "rank": chosen,
            "faan_error": normalized_error(truth, fit.covariance),
            "scm_error": normalized_error(truth, scm.entries),
        }

    return pd.DataFrame(parallel_map(one, seeds, workers))
