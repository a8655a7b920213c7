# covmodel.py

# Covariance model R = SS^T + Sigma: value types shared by every solver,
# the two fitting losses and the diagonal / whitening primitives.

from dataclasses import dataclass
from faan_cov._compat import StrEnum
from typing import Any, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from faan_cov import settings
from faan_cov.core.utils import sorted_eigh
from faan_cov.errors import InfeasibleModelError, InvalidInputError

Matrix = NDArray[np.float64]
Vector = NDArray[np.float64]


def _readonly(a: ArrayLike) -> NDArray[np.float64]:
    out = np.array(a, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


def _square(m: ArrayLike, name: str = "matrix") -> Matrix:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SampleCov:
    """
    Symmetric n x n second-moment matrix, the input of every solver.

    Asymmetry up to SYMMETRY_RTOL (relative to the largest entry) is
    removed by (M + M^T) / 2; anything larger is rejected.
    """

    entries: Matrix

    def __post_init__(self):
        m = _square(self.entries, "sample covariance")
        if m.shape[0] == 0:
            raise InvalidInputError("sample covariance is empty")
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("sample covariance has non-finite entries")
        scale = max(float(np.max(np.abs(m))), np.finfo(np.float64).tiny)
        asym = float(np.max(np.abs(m - m.T)))
        if asym > settings.SYMMETRY_RTOL * scale:
            raise InvalidInputError(
                f"matrix is not symmetric (max |M - M^T| = {asym:.3e})"
            )
        object.__setattr__(self, "entries", _readonly((m + m.T) / 2.0))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def diagonal(self) -> Vector:
        return np.diag(self.entries).copy()

    def require_positive_diagonal(self):
        d = np.diag(self.entries)
        if np.any(d <= 0.0):
            bad = np.flatnonzero(d <= 0.0).tolist()
            raise InvalidInputError(f"diagonal entries must be > 0 (indices {bad})")


class SigmaInit(StrEnum):
    IDENTITY = "identity"
    DIAG_OF_SCM = "diag_of_scm"
    EXPLICIT = "explicit"
    RANDOM = "random"
    ISOTROPIC = "isotropic"


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, caps and the initial noise variances of an iterative fit."""

    epsilon: float = settings.EPSILON
    max_iter: int = settings.MAX_ITER
    inner_sigma_sweeps: int = settings.INNER_SIGMA_SWEEPS
    sigma_init: SigmaInit = SigmaInit(settings.SIGMA_INIT)
    sigma0: tuple[float, ...] | None = None  # variances, used with EXPLICIT
    seed: int = settings.SEED
    diag_tol: float | None = None  # FAAN also waits for diagonal matching
    debug_checks: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "sigma_init", SigmaInit(self.sigma_init))
        except ValueError as exc:
            raise InvalidInputError(f"unknown sigma_init {self.sigma_init!r}") from exc
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be > 0")
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be >= 1")
        if self.inner_sigma_sweeps < 1:
            raise InvalidInputError("inner_sigma_sweeps must be >= 1")
        if self.diag_tol is not None and not self.diag_tol > 0:
            raise InvalidInputError("diag_tol must be > 0")
        if self.sigma0 is not None:
            s0 = tuple(float(x) for x in self.sigma0)
            if not all(np.isfinite(x) and x > 0 for x in s0):
                raise InvalidInputError("explicit initial variances must be > 0")
            object.__setattr__(self, "sigma0", s0)
        if self.sigma_init is SigmaInit.EXPLICIT and self.sigma0 is None:
            raise InvalidInputError("sigma_init='explicit' needs sigma0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "max_iter": self.max_iter,
            "inner_sigma_sweeps": self.inner_sigma_sweeps,
            "sigma_init": str(self.sigma_init),
            "sigma0": list(self.sigma0) if self.sigma0 is not None else None,
            "seed": self.seed,
            "diag_tol": self.diag_tol,
        }


@dataclass(frozen=True, eq=False)
class FactorFit:
    """
    Output of every solver.

    For the likelihood methods (faan, isotropic) `u` and `lam` describe the
    whitened signal part, ssT = Sigma^1/2 U Lam U^T Sigma^1/2. For the
    Frobenius methods they are the truncated eigenpairs of ssT itself and
    `lam` may hold negative values (fnm_o).
    """

    method: str
    u: Matrix
    lam: Vector
    sigma_sq: Vector
    ssT: Matrix
    loss_trace: tuple[float, ...]
    iterations: int
    converged: bool
    feasible: bool
    whitened_basis: bool = True
    negative_eigs_dropped: bool = False

    def __post_init__(self):
        for name in ("u", "lam", "sigma_sq", "ssT"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "loss_trace", tuple(float(x) for x in self.loss_trace))

    @property
    def n(self) -> int:
        return self.ssT.shape[0]

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    @property
    def sigma(self) -> Vector:
        """Noise standard deviations (nan where a variance is negative)."""
        s = self.sigma_sq
        return np.sqrt(np.where(s >= 0.0, s, np.nan))

    @property
    def min_sigma_sq(self) -> float:
        return float(np.min(self.sigma_sq))

    @property
    def covariance(self) -> Matrix:
        return self.ssT + np.diag(self.sigma_sq)

    @property
    def loss(self) -> float:
        return self.loss_trace[-1]

    @property
    def loadings(self) -> Matrix:
        """A basis S of the signal part with SS^T = ssT (clamped at zero for fnm_o)."""
        root = np.sqrt(np.clip(self.lam, 0.0, None))
        if self.whitened_basis:
            return (np.sqrt(self.sigma_sq)[:, None] * self.u) * root
        return self.u * root

    def to_report(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "rank": self.rank,
            "sigma_sq": self.sigma_sq.tolist(),
            "ssT": self.ssT.tolist(),
            "lambda": self.lam.tolist(),
            "loss_trace": list(self.loss_trace),
            "iterations": self.iterations,
            "converged": self.converged,
            "feasible": self.feasible,
            "min_sigma_sq": self.min_sigma_sq,
            "negative_eigs_dropped": self.negative_eigs_dropped,
        }


def sample_covariance(data: ArrayLike, center: bool = False) -> SampleCov:
    """(1/N) sum_t y_t y_t^T over the N columns of an n x N data matrix."""
    y = np.asarray(data, dtype=np.float64)
    if y.ndim != 2 or y.size == 0:
        raise InvalidInputError(f"data must be a non-empty n x N matrix, got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("data has non-finite entries")
    if center:
        y = y - y.mean(axis=1, keepdims=True)
    n_obs = y.shape[1]
    return SampleCov(y @ y.T / n_obs)


def _model_matrix(scm: SampleCov, ssT: ArrayLike, sigma_sq: ArrayLike) -> Matrix:
    low_rank = _square(ssT, "ssT")
    s = np.asarray(sigma_sq, dtype=np.float64).reshape(-1)
    if low_rank.shape != scm.entries.shape or s.shape[0] != scm.n:
        raise InvalidInputError(
            f"dimension mismatch: scm {scm.entries.shape}, ssT {low_rank.shape}, "
            f"sigma_sq {s.shape}"
        )
    return low_rank + np.diag(s)


def gaussian_loss(scm: SampleCov, ssT: ArrayLike, sigma_sq: ArrayLike) -> float:
    """Tr(R_hat R^-1) + ln|R| with R = ssT + diag(sigma_sq)."""
    r = _model_matrix(scm, ssT, sigma_sq)
    try:
        factor = linalg.cho_factor(r, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise InfeasibleModelError("SS^T + Sigma is not positive definite") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    fit_term = float(np.trace(linalg.cho_solve(factor, scm.entries)))
    return fit_term + logdet


def frobenius_loss(scm: SampleCov, ssT: ArrayLike, sigma_sq: ArrayLike) -> float:
    """||R_hat - ssT - diag(sigma_sq)||_F."""
    r = _model_matrix(scm, ssT, sigma_sq)
    return float(np.linalg.norm(scm.entries - r, "fro"))


def diag_part(m: ArrayLike) -> Matrix:
    """Keep the diagonal, zero everything else."""
    arr = _square(m)
    return np.diag(np.diag(arr))


def diag0(m: ArrayLike) -> Matrix:
    """Replace the diagonal with zeros."""
    arr = np.array(_square(m), copy=True)
    np.fill_diagonal(arr, 0.0)
    return arr


def clamp_plus(m: ArrayLike) -> Matrix:
    """Replace negative diagonal entries with zeros."""
    arr = np.array(_square(m), copy=True)
    np.fill_diagonal(arr, np.clip(np.diag(arr), 0.0, None))
    return arr


class DiagParts(NamedTuple):
    diag: Matrix
    diag0: Matrix
    clamp_plus: Matrix


def diag_ops(m: ArrayLike) -> DiagParts:
    return DiagParts(diag_part(m), diag0(m), clamp_plus(m))


def whiten(scm: SampleCov, sigma_sq: ArrayLike) -> Matrix:
    """Sigma^-1/2 R_hat Sigma^-1/2."""
    s = np.asarray(sigma_sq, dtype=np.float64).reshape(-1)
    if s.shape[0] != scm.n:
        raise InvalidInputError(f"sigma_sq has length {s.shape[0]}, expected {scm.n}")
    if np.any(~(s > 0.0)):
        raise InfeasibleModelError("whitening needs every sigma^2 > 0")
    d = 1.0 / np.sqrt(s)
    w = d[:, None] * scm.entries * d[None, :]
    if not np.all(np.isfinite(w)):
        raise InfeasibleModelError("whitened matrix overflowed (sigma^2 too small)")
    return (w + w.T) / 2.0


def diagonal_mismatch(scm: SampleCov, ssT: ArrayLike, sigma_sq: ArrayLike) -> float:
    """max_k |(Sigma + ssT)_kk - R_kk| / R_kk."""
    r = _model_matrix(scm, ssT, sigma_sq)
    d = np.diag(scm.entries)
    if np.any(d == 0.0):
        raise InvalidInputError("diagonal matching needs a nonzero scm diagonal")
    return float(np.max(np.abs(np.diag(r) - d) / np.abs(d)))


def is_psd(m: ArrayLike, rtol: float = settings.PSD_RTOL) -> bool:
    w = linalg.eigvalsh(_square(m))
    scale = max(float(np.max(np.abs(w))), np.finfo(np.float64).tiny)
    return bool(w[0] >= -rtol * scale)


def isotropic_variance(scm: SampleCov, rank: int) -> float:
    """Average of the n - r smallest eigenvalues of R_hat."""
    if not 0 <= rank < scm.n:
        raise InvalidInputError(f"rank must be in [0, {scm.n - 1}], got {rank}")
    rho = linalg.eigvalsh(scm.entries)[::-1]
    return float(np.mean(rho[rank:]))


def initial_sigma_sq(scm: SampleCov, config: SolverConfig, rank: int) -> Vector:
    """Starting noise variances per config.sigma_init."""
    n = scm.n
    match config.sigma_init:
        case SigmaInit.IDENTITY:
            return np.ones(n)
        case SigmaInit.DIAG_OF_SCM:
            return scm.diagonal
        case SigmaInit.EXPLICIT:
            s0 = np.asarray(config.sigma0, dtype=np.float64)
            if s0.shape[0] != n:
                raise InvalidInputError(f"sigma0 has length {s0.shape[0]}, expected {n}")
            return s0
        case SigmaInit.RANDOM:
            rng = np.random.default_rng(config.seed)
            return rng.uniform(0.01, 1.0, n) * np.abs(scm.diagonal)
        case SigmaInit.ISOTROPIC:
            s2 = isotropic_variance(scm, rank)
            if not s2 > 0:
                raise InfeasibleModelError("isotropic start needs an SPD sample covariance")
            return np.full(n, s2)
    raise InvalidInputError(f"unhandled sigma_init {config.sigma_init!r}")


def principal_pairs(m: ArrayLike, k: int) -> tuple[Vector, Matrix]:
    """The k algebraically largest eigenvalues and their eigenvectors."""
    w, v = sorted_eigh(_square(m))
    return w[:k], v[:, :k]
