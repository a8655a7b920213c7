# bounds.py

# Rank bounds and identifiability
# - Ledermann bound r_L and the parameter counts behind it
# - Guttman bound r_G from the data
# - MLE existence, resolvable DOA sources, Ruhe trace bound
# - Frisch-style test matrices (minimum decomposition rank n - 1)

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from faan_cov._compat import StrEnum
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg

from faan_cov import settings
from faan_cov.core.covmodel import FactorFit, SampleCov, Vector, diagonal_mismatch
from faan_cov.errors import FaanError, InvalidInputError, SingularMatrixError

logger = logging.getLogger(__name__)


class Identifiability(StrEnum):
    GLOBAL = "GloballyIdentifiable"
    LOCAL = "LocallyIdentifiable"
    NONE = "Unidentifiable"


class MleExistence(StrEnum):
    EXISTS = "ExistsWP1"
    EXISTS_SMALL_SAMPLE = "ExistsWP1_SmallSample"
    DOES_NOT_EXIST = "DoesNotExist"


class ParamCounts(NamedTuple):
    n_m: int  # free parameters of SS^T + Sigma
    n_c: int  # distinct entries of a symmetric n x n matrix


@dataclass(frozen=True)
class IdentifiabilityVerdict:
    n: int
    r: int
    r_l: float
    n_m: int
    n_c: int
    category: Identifiability

    def to_report(self) -> dict:
        return {
            "n": self.n,
            "r": self.r,
            "r_L": self.r_l,
            "n_m": self.n_m,
            "n_c": self.n_c,
            "class": str(self.category),
        }


class GuttmanBound(NamedTuple):
    r_g: int
    ceiling: int


class GuttmanStatistics(NamedTuple):
    per_instance: tuple[int, ...]
    mean: float
    ceil_of_mean: int
    max: int


def ledermann_bound(n: int) -> float:
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    return (2 * n + 1 - math.sqrt(8 * n + 1)) / 2


def compare_to_ledermann(n: int, r: int) -> int:
    """Sign of r - r_L, computed in integers (2r vs 2n + 1 - sqrt(8n + 1))."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    q = 8 * n + 1
    t = 2 * n + 1 - 2 * r
    if t <= 0:
        return 1
    # r < r_L  <=>  sqrt(q) < t  <=>  q < t^2
    if q < t * t:
        return -1
    if q == t * t:
        return 0
    return 1


def param_counts(n: int, r: int) -> ParamCounts:
    if n < 1 or not 0 <= r < n:
        raise InvalidInputError(f"need 0 <= r < n, got n={n}, r={r}")
    n_m = (n - r) * r + r * (r + 1) // 2 + n
    n_c = n * (n + 1) // 2
    return ParamCounts(n_m, n_c)


def identifiability_class(n: int, r: int) -> IdentifiabilityVerdict:
    if not 1 <= r < n:
        raise InvalidInputError(f"need 1 <= r < n, got n={n}, r={r}")
    counts = param_counts(n, r)
    category = {
        -1: Identifiability.GLOBAL,
        0: Identifiability.LOCAL,
        1: Identifiability.NONE,
    }[compare_to_ledermann(n, r)]
    return IdentifiabilityVerdict(n, r, ledermann_bound(n), counts.n_m, counts.n_c, category)


def _checked_inverse(scm: SampleCov) -> np.ndarray:
    cond = np.linalg.cond(scm.entries)
    if not np.isfinite(cond) or cond > 1.0 / settings.SINGULAR_RCOND:
        raise SingularMatrixError(f"sample covariance is singular (cond = {cond:.3e})")
    inv = linalg.inv(scm.entries)
    return (inv + inv.T) / 2.0


def noise_variance_cap(scm: SampleCov) -> Vector:
    """[diag(R^-1)]^-1: no admissible noise variance exceeds these values."""
    return 1.0 / np.diag(_checked_inverse(scm))


def guttman_bound(scm: SampleCov) -> GuttmanBound:
    """Positive-eigenvalue count of R - [diag(R^-1)]^-1."""
    arg = scm.entries - np.diag(noise_variance_cap(scm))
    w = linalg.eigvalsh((arg + arg.T) / 2.0)
    scale = float(np.max(np.abs(w)))
    if scale == 0.0:
        return GuttmanBound(0, 0)
    count = int(np.sum(w > settings.POSITIVE_EIG_RTOL * scale))
    return GuttmanBound(count, count)


def guttman_statistics(matrices: Iterable[SampleCov]) -> GuttmanStatistics:
    """Per-instance r_G with both the averaged value and its round-up."""
    counts = tuple(guttman_bound(m).r_g for m in matrices)
    if not counts:
        raise InvalidInputError("no matrices given")
    mean = float(np.mean(counts))
    return GuttmanStatistics(counts, mean, math.ceil(mean - 1e-12), max(counts))


def ruhe_lower_bound(eigs_a: ArrayLike, eigs_b: ArrayLike) -> float:
    """sum_i a_i b_(n+1-i) with a sorted descending; Tr(AB) never falls below it."""
    a = np.asarray(eigs_a, dtype=np.float64).reshape(-1)
    b = np.asarray(eigs_b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise InvalidInputError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.dot(np.sort(a)[::-1], np.sort(b)))


def ruhe_trace_bound(a: ArrayLike, b: ArrayLike) -> float:
    """ruhe_lower_bound on the eigenvalues of two symmetric matrices."""
    return ruhe_lower_bound(linalg.eigvalsh(a), linalg.eigvalsh(b))


def mle_existence(n_obs: int, n: int, r: int) -> MleExistence:
    if min(n_obs, n, r) < 1:
        raise InvalidInputError("N, n and r must be positive")
    if n_obs >= n:
        return MleExistence.EXISTS
    if n_obs >= r:
        return MleExistence.EXISTS_SMALL_SAMPLE
    return MleExistence.DOES_NOT_EXIST


def resolvable_sources(n: int, anisotropic: bool) -> int:
    """Largest source count m a real n-sensor array can resolve."""
    if n < 2:
        raise InvalidInputError(f"n must be >= 2, got {n}")
    if anisotropic:
        bound = n / 2 + 0.25 * (1 - math.sqrt(8 * n + 1))
    else:
        bound = n / 2 - 0.5
    return max(0, math.floor(bound + 1e-12))


def frisch_test_matrix(n: int, seed: int, spread: float = settings.FRISCH_SPREAD) -> SampleCov:
    """
    SPD matrix whose inverse is entrywise nonnegative.

    The inverse P is drawn directly: symmetric off-diagonal entries uniform
    on [1 - spread, 1] and a diagonal that dominates each row, so P is SPD.
    """
    if n < 2:
        raise InvalidInputError(f"n must be >= 2, got {n}")
    if not 0.0 < spread <= 1.0:
        raise InvalidInputError(f"spread must be in (0, 1], got {spread}")
    rng = np.random.default_rng(seed)
    for _ in range(settings.FRISCH_MAX_DRAWS):
        c = np.triu(rng.uniform(1.0 - spread, 1.0, (n, n)), 1)
        c = c + c.T
        p = c + np.diag(c.sum(axis=1) + rng.uniform(0.0, 1.0, n))
        m = linalg.inv(p)
        m = (m + m.T) / 2.0
        if np.all(linalg.inv(m) >= -1e-12):
            return SampleCov(m)
        logger.debug("frisch draw rejected (n=%d, seed=%d)", n, seed)
    raise FaanError(f"no admissible Frisch matrix after {settings.FRISCH_MAX_DRAWS} draws")


def diagonal_matching_residual(scm: SampleCov, fit: FactorFit) -> float:
    """max_k |(Sigma + SS^T)_kk - R_kk| / R_kk."""
    return diagonal_mismatch(scm, fit.ssT, fit.sigma_sq)
