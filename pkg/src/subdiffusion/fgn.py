"""Fractional Gaussian noise, fractional Brownian motion and the fGn
memory kernel.

The generator emits unit-variance noise; physical scaling is applied by
the modules that consume it.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, SingularityError
from .gaussian import StationarySampler, rng_for
from .params import check_hurst
from .trace import Trace

GENERATOR_ID = "circulant-embedding/pcg64"


def fgn_autocovariance(h: float, k):
    """Autocovariance of unit fGn at integer lag(s) ``k``:

    gamma(k) = (|k+1|^2h + |k-1|^2h - 2|k|^2h) / 2,  gamma(0) = 1.
    """
    h = check_hurst(h, gle=False)
    k = np.abs(np.asarray(k, dtype=float))
    g = 0.5 * (np.abs(k + 1) ** (2 * h) + np.abs(k - 1) ** (2 * h) - 2 * k ** (2 * h))
    return g.item() if g.ndim == 0 else g


def kernel_K(h: float, t):
    """Memory kernel K_H(t) = 2h(2h-1)|t|^(2h-2), for t != 0 and 1/2 < h < 1."""
    h = check_hurst(h)
    t = np.asarray(t, dtype=float)
    if np.any(t == 0):
        raise SingularityError("K_H diverges at t = 0")
    out = 2 * h * (2 * h - 1) * np.abs(t) ** (2 * h - 2)
    return out.item() if out.ndim == 0 else out


def _sampler(h: float, n: int) -> StationarySampler:
    return StationarySampler(lambda k: fgn_autocovariance(h, k), n)


def sample_fgn(h: float, n: int, seed: int, path_index: int = 0) -> Trace:
    """``n`` unit-variance fGn increments, a pure function of its arguments."""
    h = check_hurst(h, gle=False)
    if int(n) < 1:
        raise InputError("n must be at least 1")
    sampler = _sampler(h, int(n))
    values = sampler.sample(rng_for(seed, path_index))
    meta = {"seed": int(seed), "path": int(path_index), "h": h,
            "generator": GENERATOR_ID, "method": sampler.method, "kind": "fgn"}
    return Trace(1.0, values, 0.0, meta)


def sample_fgn_ensemble(h: float, n: int, seed: int, n_paths: int) -> np.ndarray:
    """Array of shape (n_paths, n); row i equals ``sample_fgn(h, n, seed, i).values``."""
    h = check_hurst(h, gle=False)
    sampler = _sampler(h, int(n))
    return np.stack([sampler.sample(rng_for(seed, i)) for i in range(int(n_paths))])


def fbm_from_fgn(increments: Trace, dt: float, h: float | None = None) -> Trace:
    """Fractional Brownian motion on the grid ``k * dt`` from unit fGn.

    Partial sums are scaled by ``dt**h`` so that Var B_H(k dt) = (k dt)^2h;
    the returned trace has ``len(increments) + 1`` samples with B_H(0) = 0.
    """
    if h is None:
        if "h" not in increments.meta:
            raise InputError("Hurst exponent missing from trace metadata")
        h = increments.meta["h"]
    h = check_hurst(h, gle=False)
    if not dt > 0:
        raise InputError("dt must be positive")
    path = np.concatenate([[0.0], np.cumsum(increments.values)]) * dt**h
    return Trace(dt, path, 0.0, {**increments.meta, "kind": "fbm", "dt": dt})
