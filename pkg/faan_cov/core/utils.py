# utils.py

import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import TypeVar

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from faan_cov.settings import THREADS_ENV

T = TypeVar("T")
R = TypeVar("R")


def asset_path(*parts) -> Path:
    """Return a path under the package's assets directory."""
    p = Path(__file__).resolve().parents[1] / "assets"
    for part in parts:
        p = p / part
    return p


def worker_count(workers: int | None = None) -> int:
    """Explicit count wins; otherwise FAAN_THREADS, otherwise 1."""
    if workers is None:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError:
            workers = 1
    return max(1, workers)


def parallel_map(
    fn: Callable[[T], R], items: Iterable[T], workers: int | None = None
) -> list[R]:
    """Map fn over items, results in input order regardless of completion order."""
    items = list(items)
    n_workers = worker_count(workers)
    if n_workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))


def sorted_eigh(m: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Symmetric eigendecomposition with eigenvalues in descending order.

    Ties keep LAPACK's index order. Each eigenvector is flipped so its
    largest-magnitude component is positive, which makes runs reproducible.
    """
    w, v = linalg.eigh(m)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivots, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return w, v * signs
