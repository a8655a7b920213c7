# doa.py

# Direction-of-arrival estimation on a real-valued uniform linear array
# - y_t = A s_t + e_t, A with cos/sin column pairs per source frequency
# - noise variances fixed per scenario, scaled once to hit the SNR
# - MUSIC from the FAAN signal basis, from the FAAN-whitened SCM or the raw SCM
# - Monte-Carlo RMSE sweeps over the snapshot count or the SNR

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, optimize, signal

from faan_cov import settings
from faan_cov.core.bounds import resolvable_sources
from faan_cov.core.covmodel import (
    FactorFit,
    Matrix,
    SampleCov,
    SolverConfig,
    Vector,
    principal_pairs,
    sample_covariance,
    whiten,
)
from faan_cov.core.utils import parallel_map
from faan_cov.errors import InvalidInputError, RankDeficientError
from faan_cov.solvers import FitRequest, faan_fit

logger = logging.getLogger(__name__)

METHODS = ("faan_basis", "faan_whitened", "scm")


@dataclass(frozen=True, eq=False)
class ArrayScenario:
    """
    n sensors observing m sources at spatial frequencies in [0, 0.5).

    noise_var holds the unscaled per-sensor variances; when omitted they
    are drawn uniform(0, 1) from the seed and then stay fixed, also when
    the scenario is copied with another seed.
    """

    n: int = settings.DOA_SENSORS
    freqs: tuple[float, ...] = settings.DOA_FREQS
    n_snapshots: int = settings.DOA_SNAPSHOTS
    snr_db: float = settings.DOA_SNR_DB
    seed: int = settings.SEED
    noise_var: tuple[float, ...] | None = None

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.freqs)
        object.__setattr__(self, "freqs", freqs)
        if self.n < 2:
            raise InvalidInputError(f"need at least 2 sensors, got {self.n}")
        if not freqs:
            raise InvalidInputError("no source frequencies")
        if any(not 0.0 <= f < 0.5 for f in freqs):
            raise InvalidInputError(f"frequencies must lie in [0, 0.5), got {freqs}")
        if len(set(freqs)) != len(freqs):
            raise InvalidInputError(f"frequencies must be distinct, got {freqs}")
        m_max = resolvable_sources(self.n, anisotropic=True)
        if len(freqs) > m_max:
            raise InvalidInputError(
                f"{len(freqs)} sources exceed the {m_max} resolvable by {self.n} sensors"
            )
        if self.n_snapshots < 1:
            raise InvalidInputError(f"n_snapshots must be >= 1, got {self.n_snapshots}")
        if self.seed < 0:
            raise InvalidInputError(f"seed must be >= 0, got {self.seed}")
        if self.noise_var is None:
            drawn = np.random.default_rng([self.seed, 1]).uniform(0.0, 1.0, self.n)
            object.__setattr__(self, "noise_var", tuple(float(v) for v in drawn))
        noise = tuple(float(v) for v in self.noise_var)
        if len(noise) != self.n or not all(v > 0.0 for v in noise):
            raise InvalidInputError(f"noise_var must hold {self.n} positive values")
        object.__setattr__(self, "noise_var", noise)

    @property
    def m(self) -> int:
        return len(self.freqs)

    @property
    def steering(self) -> Matrix:
        return steering_matrix_real(self.freqs, self.n)

    @property
    def scaled_noise_var(self) -> Vector:
        return scaled_noise_var(self.steering, self.noise_var, self.snr_db)

    @property
    def true_covariance(self) -> Matrix:
        a = self.steering
        return a @ a.T + np.diag(self.scaled_noise_var)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "freqs": list(self.freqs),
            "n_snapshots": self.n_snapshots,
            "snr_db": self.snr_db,
            "seed": self.seed,
            "noise_var": list(self.noise_var),
        }


@dataclass(frozen=True, eq=False)
class MusicResult:
    """
    Pseudospectrum over the grid and its m picked frequencies.

    When the spectrum has fewer than m local maxima, peaks is padded with
    repeats of the highest one and padded is True. Padded peaks are not all
    local maxima.
    """

    grid: Vector
    spectrum: Vector
    peaks: tuple[float, ...]
    method: str
    padded: bool = False


def steering_matrix_real(freqs: ArrayLike, n: int) -> Matrix:
    """n x 2m matrix with columns cos(2 pi f_k j), sin(2 pi f_k j), j = 0..n-1."""
    f = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    if f.size == 0:
        raise InvalidInputError("no frequencies given")
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    phase = 2.0 * np.pi * np.outer(np.arange(n), f)
    a = np.empty((n, 2 * f.size))
    a[:, 0::2] = np.cos(phase)
    a[:, 1::2] = np.sin(phase)
    return a


def scaled_noise_var(steering: Matrix, noise_var: ArrayLike, snr_db: float) -> Vector:
    """Rescale noise_var by one scalar so that Tr(A A^T) / sum(sigma^2) = 10^(snr/10)."""
    v = np.asarray(noise_var, dtype=np.float64)
    signal_power = float(np.sum(steering**2))
    return v * (signal_power / (float(np.sum(v)) * 10.0 ** (snr_db / 10.0)))


def simulate_array(scn: ArrayScenario) -> NDArray[np.float64]:
    """n x N snapshots; standard normal source amplitudes, Gaussian noise."""
    rng = np.random.default_rng(scn.seed)
    a = scn.steering
    s = rng.standard_normal((2 * scn.m, scn.n_snapshots))
    e = np.sqrt(scn.scaled_noise_var)[:, None] * rng.standard_normal((scn.n, scn.n_snapshots))
    return a @ s + e


def frequency_grid(grid_step: float = settings.GRID_STEP) -> Vector:
    if not 0.0 < grid_step < 0.5:
        raise InvalidInputError(f"grid_step must be in (0, 0.5), got {grid_step}")
    return np.arange(0.0, 0.5, grid_step)


def _pseudospectrum(projector: Matrix, grid: Vector) -> Vector:
    """||P a(f)|| for the n x 2 cos/sin block a(f) at every grid frequency."""
    phase = 2.0 * np.pi * np.outer(np.arange(projector.shape[1]), grid)
    pc = projector @ np.cos(phase)
    ps = projector @ np.sin(phase)
    return np.sqrt(np.sum(pc**2, axis=0) + np.sum(ps**2, axis=0))


def pick_peaks(grid: Vector, spectrum: Vector, m: int) -> tuple[tuple[float, ...], bool]:
    """
    The m highest local maxima, at least PEAK_EXCLUSION_STEPS apart, ascending.

    Returns (peaks, padded). With fewer than m maxima the list is filled with
    the highest one; with none at all the grid argmax stands in.
    """
    idx, _ = signal.find_peaks(spectrum, distance=settings.PEAK_EXCLUSION_STEPS)
    padded = idx.size < m
    if idx.size == 0:
        idx = np.array([int(np.argmax(spectrum))])
    top = idx[np.argsort(-spectrum[idx], kind="stable")[:m]]
    if padded:
        logger.debug("only %d peaks found for %d sources", top.size, m)
        top = np.concatenate([top, np.full(m - top.size, top[0])])
    return tuple(float(f) for f in np.sort(grid[top])), padded


def music_faan(fit: FactorFit, m: int, grid_step: float = settings.GRID_STEP) -> MusicResult:
    """Pseudospectrum ||(S^T S)^-1/2 S^T a(f)|| with S the fitted signal basis."""
    if fit.rank != 2 * m:
        raise InvalidInputError(f"MUSIC for {m} sources needs a rank-{2 * m} fit, got {fit.rank}")
    active = int(np.sum(fit.lam > 0.0))
    if active < 2 * m:
        raise RankDeficientError(f"only {active} of {2 * m} factors are active")
    s = fit.loadings
    w, v = linalg.eigh(s.T @ s)
    projector = (v / np.sqrt(w)) @ v.T @ s.T
    grid = frequency_grid(grid_step)
    spectrum = _pseudospectrum(projector, grid)
    peaks, padded = pick_peaks(grid, spectrum, m)
    return MusicResult(grid, spectrum, peaks, "faan_basis", padded)


def music_whitened(
    scm: SampleCov,
    sigma_sq: ArrayLike,
    m: int,
    grid_step: float = settings.GRID_STEP,
    method: str = "faan_whitened",
) -> MusicResult:
    """
    Pseudospectrum ||U_S^T Sigma^-1/2 a(f)|| with U_S the 2m principal
    eigenvectors of the whitened SCM. sigma_sq = 1 gives plain MUSIC.
    """
    s2 = np.asarray(sigma_sq, dtype=np.float64)
    if 2 * m >= scm.n:
        raise InvalidInputError(f"{m} sources need more than {2 * m} sensors")
    _, u = principal_pairs(whiten(scm, s2), 2 * m)
    projector = u.T / np.sqrt(s2)[None, :]
    grid = frequency_grid(grid_step)
    spectrum = _pseudospectrum(projector, grid)
    peaks, padded = pick_peaks(grid, spectrum, m)
    return MusicResult(grid, spectrum, peaks, method, padded)


def rmse(estimates: ArrayLike, truth: ArrayLike) -> float:
    """
    mean_k sqrt(mean_t (f_hat_tk - f_k)^2), after matching each trial's
    estimates to the true frequencies by minimum total distance.
    """
    est = np.asarray(estimates, dtype=np.float64)
    f = np.atleast_1d(np.asarray(truth, dtype=np.float64))
    if est.ndim == 1:
        est = est[None, :]
    if est.shape[0] == 0:
        raise InvalidInputError("no trials")
    if est.shape[1] != f.size:
        raise InvalidInputError(f"{est.shape[1]} estimates per trial for {f.size} frequencies")
    err = np.empty_like(est)
    for t, row in enumerate(est):
        rows, cols = optimize.linear_sum_assignment(np.abs(row[:, None] - f[None, :]))
        err[t, cols] = row[rows] - f[cols]
    return float(np.mean(np.sqrt(np.mean(err**2, axis=0))))


def doa_trial(
    scn: ArrayScenario, trial: int, config: SolverConfig | None = None
) -> dict[str, tuple[float, ...] | None]:
    """Peaks of every method on one seeded draw; None where FAAN lost a factor."""
    seeded = replace(scn, seed=scn.seed + trial)
    scm = sample_covariance(simulate_array(seeded))
    config = config or SolverConfig(epsilon=settings.DOA_EPSILON)
    fit = faan_fit(FitRequest(scm, 2 * scn.m, config))
    try:
        basis = music_faan(fit, scn.m).peaks
    except RankDeficientError as exc:
        logger.warning("trial %d: %s", trial, exc)
        basis = None
    return {
        "faan_basis": basis,
        "faan_whitened": music_whitened(scm, fit.sigma_sq, scn.m).peaks,
        "scm": music_whitened(scm, np.ones(scn.n), scn.m, method="scm").peaks,
    }


def run_trials(
    scn: ArrayScenario,
    trials: int,
    config: SolverConfig | None = None,
    workers: int | None = None,
) -> list[dict[str, tuple[float, ...] | None]]:
    if trials < 1:
        raise InvalidInputError(f"trials must be >= 1, got {trials}")
    return parallel_map(lambda t: doa_trial(scn, t, config), range(trials), workers)


def trial_rmse(scn: ArrayScenario, results: Sequence[dict]) -> dict[str, tuple[float, int, int]]:
    """Per method: (rmse, usable trials, failed trials)."""
    out = {}
    for method in METHODS:
        usable = [r[method] for r in results if r[method] is not None]
        failures = len(results) - len(usable)
        value = rmse(usable, scn.freqs) if usable else float("nan")
        out[method] = (value, len(usable), failures)
    return out


def rmse_sweep(
    scn: ArrayScenario,
    sweep: Literal["N", "snr"],
    values: Sequence[float] | None = None,
    trials: int = settings.DOA_TRIALS,
    config: SolverConfig | None = None,
    workers: int | None = None,
) -> pd.DataFrame:
    """Plot-ready RMSE table, one row per (sweep value, method)."""
    match sweep:
        case "N":
            column = "N"
            values = settings.SWEEP_N if values is None else values
            scenarios = [replace(scn, n_snapshots=int(v)) for v in values]
        case "snr":
            column = "snr_db"
            values = settings.SWEEP_SNR_DB if values is None else values
            scenarios = [replace(scn, snr_db=float(v)) for v in values]
        case _:
            raise InvalidInputError(f"sweep must be 'N' or 'snr', got {sweep!r}")

    rows = []
    for s in scenarios:
        value = s.n_snapshots if column == "N" else s.snr_db
        scores = trial_rmse(s, run_trials(s, trials, config, workers))
        for method, (value_rmse, usable, failures) in scores.items():
            rows.append(
                {
                    column: value,
                    "method": method,
                    "rmse": value_rmse,
                    "trials": usable,
                    "failures": failures,
                }
            )
        logger.info("%s = %s: %s", column, value, {k: v[0] for k, v in scores.items()})
    return pd.DataFrame(rows, columns=[column, "method", "rmse", "trials", "failures"])
