from collections.abc import Callable
from typing import NamedTuple

import numpy as np
import pytest

from faan_cov.core.covmodel import SampleCov
from faan_cov.core.matrixio import read_scm_csv
from faan_cov.core.utils import asset_path


class ExactModel(NamedTuple):
    scm: SampleCov
    loadings: np.ndarray
    ssT: np.ndarray
    sigma_sq: np.ndarray


@pytest.fixture
def fnm_matrix() -> SampleCov:
    return read_scm_csv(asset_path("matrices", "fnm_example.csv"))


@pytest.fixture
def faan_matrix() -> SampleCov:
    return read_scm_csv(asset_path("matrices", "faan_example.csv"))


@pytest.fixture
def identity_path():
    return asset_path("matrices", "identity4.csv")


@pytest.fixture
def random_spd() -> Callable[..., SampleCov]:
    """SCM of 2n Gaussian samples with a random non-white covariance."""

    def make(n: int, seed: int, n_obs: int | None = None) -> SampleCov:
        rng = np.random.default_rng(seed)
        mix = rng.standard_normal((n, n)) + np.diag(rng.uniform(0.5, 2.0, n))
        y = mix @ rng.standard_normal((n, n_obs or 2 * n))
        return SampleCov(y @ y.T / y.shape[1])

    return make


@pytest.fixture
def exact_model() -> Callable[..., ExactModel]:
    """R = SS^T + Sigma with no sampling error."""

    def make(n: int, r: int, seed: int) -> ExactModel:
        rng = np.random.default_rng(seed)
        s = rng.standard_normal((n, r))
        sigma_sq = rng.uniform(0.5, 1.5, n)
        ssT = s @ s.T
        return ExactModel(SampleCov(ssT + np.diag(sigma_sq)), s, ssT, sigma_sq)

    return make
