"""Exact sampling of stationary Gaussian sequences on a uniform grid.

Circulant embedding is tried first. When the embedded circulant has an
eigenvalue below ``-NEG_TOL * max(eigenvalue)`` the embedding is doubled
(if the covariance can be evaluated at longer lags) and, failing that,
grids of at most ``DENSE_MAX`` points fall back to a dense factorization
of the Toeplitz covariance.

Randomness: every path owns a PCG64 stream seeded by
``SeedSequence(seed, spawn_key=(path_index,))``, so path ``i`` of an
ensemble is the same whether it is generated alone or with others.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import InfeasibleGridError, InputError

log = logging.getLogger(__name__)

NEG_TOL = 1e-9
DENSE_MAX = 4096
MAX_DOUBLINGS = 3


def rng_for(seed: int, path_index: int = 0) -> np.random.Generator:
    """Deterministic generator for one path of a seeded ensemble."""
    if seed is None:
        raise InputError("a seed is required")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))))


def circulant_eigenvalues(acov: np.ndarray) -> np.ndarray:
    """Eigenvalues of the minimal circulant embedding of lags 0..M."""
    acov = np.asarray(acov, dtype=float)
    row = np.concatenate([acov, acov[-2:0:-1]])
    return np.fft.fft(row).real


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


class StationarySampler:
    """Reusable factorization of a stationary covariance on ``n`` points.

    Parameters
    ----------
    acov : callable or ndarray
        Either a function of integer lag arrays, or an array of covariances
        at lags ``0, 1, ...`` (at least ``n`` entries).
    n : int
        Number of grid points to sample.
    """

    def __init__(self, acov: Callable[[np.ndarray], np.ndarray] | np.ndarray, n: int):
        if n < 1:
            raise InputError("need at least one grid point")
        self.n = int(n)
        self.method = None
        self._sqrt_eig = None
        self._chol = None
        if callable(acov):
            getter = acov
            table = None
        else:
            table = np.asarray(acov, dtype=float)
            if table.size < self.n:
                raise InputError("covariance table shorter than the grid")
            getter = None
        self._build(getter, table)

    def _build(self, getter, table):
        n = self.n
        if n == 1:
            var = float(getter(np.array([0]))[0]) if getter else float(table[0])
            self.method = "dense"
            self._chol = np.array([[np.sqrt(max(var, 0.0))]])
            return
        half = _next_pow2(n - 1)
        for attempt in range(MAX_DOUBLINGS + 1):
            if getter is not None:
                lags = getter(np.arange(half + 1))
            elif table.size >= half + 1:
                lags = table[: half + 1]
            elif attempt == 0:
                # table too short for a power-of-two embedding: use minimal size
                half = n - 1
                lags = table[: half + 1]
            else:
                break
            eig = circulant_eigenvalues(lags)
            top = eig.max()
            if top > 0 and eig.min() >= -NEG_TOL * top:
                self.method = "circulant"
                self._m = eig.size
                self._sqrt_eig = np.sqrt(np.clip(eig, 0.0, None) / eig.size)
                return
            log.debug("embedding of size %d not nonnegative (min %.3g)", eig.size, eig.min() / top)
            if getter is None:
                break
            half *= 2
        if n <= DENSE_MAX:
            lags = getter(np.arange(n)) if getter is not None else table[:n]
            self.method = "dense"
            self._chol = psd_factor(linalg.toeplitz(lags))
            return
        raise InfeasibleGridError(
            f"no nonnegative circulant embedding for n={n}; reduce n*dt or the number of points"
        )

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw ``size`` independent paths (one path when ``size`` is None)."""
        batch = 1 if size is None else int(size)
        if self.method == "circulant":
            z = rng.standard_normal((batch, self._m)) + 1j * rng.standard_normal((batch, self._m))
            out = np.fft.fft(self._sqrt_eig * z, axis=1).real[:, : self.n]
        else:
            z = rng.standard_normal((batch, self.n))
            out = z @ self._chol.T
        return out[0] if size is None else out


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """Factor L with L L^T = cov; eigen-decomposition when Cholesky fails."""
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        w, v = linalg.eigh(cov)
        if w.min() < -NEG_TOL * max(w.max(), 0.0) * 10:
            raise InfeasibleGridError(f"covariance matrix not positive semidefinite (min eig {w.min():.3g})")
        return v * np.sqrt(np.clip(w, 0.0, None))


def sample_dense(cov: np.ndarray, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Sample N(0, cov) directly from a full covariance matrix."""
    factor = psd_factor(np.asarray(cov, dtype=float))
    batch = 1 if size is None else int(size)
    out = rng.standard_normal((batch, factor.shape[0])) @ factor.T
    return out[0] if size is None else out
