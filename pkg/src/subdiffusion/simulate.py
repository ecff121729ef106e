"""Exact path simulation of the free, harmonic and overdamped regimes.

Every solution of the model is a zero-mean stationary Gaussian process
whose covariance is known (see :mod:`subdiffusion.analytic`), so paths
are synthesized directly from the covariance on the grid instead of
time-stepping the memory equation. There is no discretization bias.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import analytic
from .errors import GridMismatchError, InfeasibleGridError, InputError, ParameterError
from .gaussian import DENSE_MAX, NEG_TOL, StationarySampler, psd_factor, rng_for
from .params import PhysicalParams, check_hurst
from .trace import CovarianceCurve, Trace

log = logging.getLogger(__name__)

REGIMES = ("free", "harmonic", "overdamped")


@dataclass(frozen=True)
class SimRequest:
    """What to simulate: parameters, regime and grid."""

    params: PhysicalParams
    h: float
    regime: str
    n: int
    dt: float
    seed: int
    tol: float = analytic.DEFAULT_TOL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        check_hurst(self.h)
        if self.regime not in REGIMES:
            raise ParameterError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.regime == "free":
            self.params.require_free()
        else:
            self.params.require_potential()
        if int(self.n) < 2:
            raise ParameterError("n must be at least 2")
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if self.seed is None:
            raise ParameterError("a seed is required")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "dt", float(self.dt))

    def trace_meta(self, path: int, kind: str) -> dict:
        p = self.params
        return {"regime": self.regime, "h": self.h, "m": p.m, "zeta": p.zeta, "kbt": p.kbt,
                "psi": p.psi, "seed": int(self.seed), "path": int(path), "kind": kind}


def _need(req: SimRequest, regime: str) -> None:
    if req.regime != regime:
        raise ParameterError(f"request regime is {req.regime!r}, expected {regime!r}")


class _LagTable:
    """Covariance at integer lags, evaluated once up to the largest lag seen."""

    def __init__(self, grid_fn):
        self._fn = grid_fn
        self._vals = np.empty(0)

    def __call__(self, lags):
        lags = np.asarray(lags, dtype=int)
        top = int(lags.max()) + 1
        if top > self._vals.size:
            self._vals = self._fn(top)
        return self._vals[lags]


def overdamped_sampler(req: SimRequest) -> StationarySampler:
    _need(req, "overdamped")
    p, h, dt = req.params, req.h, req.dt
    cov = _LagTable(lambda n: analytic.overdamped_autocovariance(p, h, dt * np.arange(n)))
    return StationarySampler(cov, req.n)


def free_velocity_sampler(req: SimRequest) -> StationarySampler:
    _need(req, "free")
    p, h, dt, tol = req.params, req.h, req.dt, req.tol
    cov = _LagTable(lambda n: analytic.velocity_autocovariance_grid(p, h, dt, n, tol))
    return StationarySampler(cov, req.n)


def simulate_overdamped(req: SimRequest, path_index: int = 0) -> Trace:
    """Stationary displacement trace of the overdamped harmonic model."""
    s = overdamped_sampler(req)
    x = s.sample(rng_for(req.seed, path_index))
    return Trace(req.dt, x, 0.0, {**req.trace_meta(path_index, "x"), "method": s.method})


def simulate_free_velocity(req: SimRequest, path_index: int = 0) -> Trace:
    """Stationary velocity trace of the free particle."""
    s = free_velocity_sampler(req)
    v = s.sample(rng_for(req.seed, path_index))
    return Trace(req.dt, v, 0.0, {**req.trace_meta(path_index, "v"), "method": s.method})


def simulate_ensemble(req: SimRequest, n_paths: int, first_path: int = 0) -> np.ndarray:
    """Array (n_paths, n) of x (overdamped) or v (free) paths.

    Row ``i`` is identical to the single-path simulation with
    ``path_index = first_path + i``.
    """
    if req.regime == "overdamped":
        s = overdamped_sampler(req)
    elif req.regime == "free":
        s = free_velocity_sampler(req)
    else:
        raise ParameterError("use simulate_harmonic_ensemble for the harmonic regime")
    return np.stack([s.sample(rng_for(req.seed, first_path + i)) for i in range(int(n_paths))])


def displacement_from_velocity(v: Trace) -> Trace:
    """x(t) = int_0^t v(s) ds by the cumulative trapezoidal rule, x(0) = 0."""
    vals = v.values
    x = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]))]) * v.dt
    return v.with_values(x, kind="x")


def displacement_paths(v: np.ndarray, dt: float) -> np.ndarray:
    """Row-wise trapezoidal integration of an array of velocity paths."""
    v = np.atleast_2d(v)
    steps = 0.5 * (v[:, 1:] + v[:, :-1]) * dt
    return np.concatenate([np.zeros((v.shape[0], 1)), np.cumsum(steps, axis=1)], axis=1)


# ---------------------------------------------------------------------------
# Harmonic regime
# ---------------------------------------------------------------------------

def harmonic_lag_tables(p: PhysicalParams, h: float, dt: float, n: int, tol: float = analytic.DEFAULT_TOL,
                        prefix=None):
    """Grid covariances for lags 0..n-1: xx, vv and c(k) = E[x(0) v(k dt)].

    c is odd in the lag, so E[v(0) x(k dt)] = -c(k). ``prefix`` is a
    previously computed (xx, vv, xv) triple for the leading lags; only the
    remaining lags are evaluated.
    """
    xx = np.empty(n)
    vv = np.empty(n)
    xv = np.empty(n)
    start = 0
    if prefix is not None:
        start = min(len(prefix[0]), n)
        for dst, src in zip((xx, vv, xv), prefix):
            dst[:start] = src[:start]
    cut = math.inf
    if n - start > 64:
        cut = analytic.harmonic_asymptotic_lag(p, h, tol, t_max=(n - 1) * dt)
    k_far = max(start, min(n, int(math.ceil(cut / dt)))) if math.isfinite(cut) else n
    for k in range(start, k_far):
        cov = analytic.harmonic_covariances(p, h, k * dt, tol)
        xx[k], vv[k] = cov["xx"], cov["vv"]
        xv[k] = -cov["xv"]
    if k_far < n:
        cov = analytic.harmonic_covariances_asymptotic(p, h, dt * np.arange(k_far, n))
        xx[k_far:], vv[k_far:] = cov["xx"], cov["vv"]
        xv[k_far:] = -cov["xv"]
    xv[0] = 0.0
    return xx, vv, xv


def harmonic_block_covariance(xx, vv, xv) -> np.ndarray:
    """Covariance of (x_0..x_{n-1}, v_0..v_{n-1}) from lag tables."""
    n = xx.size
    cxx = linalg.toeplitz(xx)
    cvv = linalg.toeplitz(vv)
    # E[x_i v_j] = c(j - i): first column c(-i) = -c(i), first row c(j)
    cxv = linalg.toeplitz(-xv, xv)
    out = np.empty((2 * n, 2 * n))
    out[:n, :n] = cxx
    out[n:, n:] = cvv
    out[:n, n:] = cxv
    out[n:, :n] = cxv.T
    return out


class _BivariateEmbedding:
    """Exact joint circulant embedding of a stationary (x, v) pair.

    Each circulant frequency carries a 2x2 Hermitian spectral matrix; the
    embedding is valid when all of them are positive semidefinite.
    """

    def __init__(self, xx, vv, xv, n):
        m = 2 * (xx.size - 1)
        rxx = np.concatenate([xx, xx[-2:0:-1]])
        rvv = np.concatenate([vv, vv[-2:0:-1]])
        # r_xv[j] = E[x_0 v_j] for j <= m/2, E[x_0 v_{j-m}] = -c(m-j) beyond
        rxv = np.concatenate([xv[:-1], [0.0], -xv[-2:0:-1]])
        fxx = np.fft.fft(rxx).real
        fvv = np.fft.fft(rvv).real
        fxv = np.fft.fft(rxv)
        # factor [[fxx, fxv], [conj fxv, fvv]] = L L^H with L lower-triangular
        top = max(fxx.max(), fvv.max())
        a = np.sqrt(np.clip(fxx, 0.0, None))
        safe = np.where(a > 0, a, 1.0)
        b = np.where(a > 0, fxv / safe, 0.0)
        d2 = fvv - np.abs(b) ** 2
        if fxx.min() < -NEG_TOL * top or d2.min() < -NEG_TOL * top:
            raise InfeasibleGridError("bivariate embedding is not positive semidefinite")
        self.m = m
        self.n = n
        self.l11 = a / np.sqrt(m)
        self.l21 = b / np.sqrt(m)
        self.l22 = np.sqrt(np.clip(d2, 0.0, None)) / np.sqrt(m)

    def sample(self, rng):
        z1 = rng.standard_normal(self.m) + 1j * rng.standard_normal(self.m)
        z2 = rng.standard_normal(self.m) + 1j * rng.standard_normal(self.m)
        # E[x_j v_k] = (1/m) sum_f conj(fxv) e^{2 pi i (j-k) f/m} = r_xv[k-j]
        x = np.fft.ifft(self.l11 * z1).real * self.m
        v = np.fft.ifft(self.l21 * z1 + self.l22 * z2).real * self.m
        return x[: self.n], v[: self.n]


def harmonic_sampler(req: SimRequest):
    """Callable ``rng -> (x, v)`` for the harmonic regime.

    Dense block factorization for n <= DENSE_MAX, joint circulant
    embedding (power-of-two size, doubled up to three times) above.
    """
    _need(req, "harmonic")
    p, h, dt, n = req.params, req.h, req.dt, req.n
    if n <= DENSE_MAX:
        xx, vv, xv = harmonic_lag_tables(p, h, dt, n, req.tol)
        cov = harmonic_block_covariance(xx, vv, xv)
        factor = psd_factor(cov)

        def draw(rng):
            z = factor @ rng.standard_normal(2 * n)
            return z[:n], z[n:]

        return _Tagged(draw, "dense")
    half = 1 << int(n).bit_length()
    tables = None
    for _ in range(4):
        tables = harmonic_lag_tables(p, h, dt, half + 1, req.tol, prefix=tables)
        xx, vv, xv = tables
        try:
            emb = _BivariateEmbedding(xx, vv, xv, n)
        except InfeasibleGridError:
            half *= 2
            continue
        return _Tagged(emb.sample, "circulant")
    raise InfeasibleGridError(f"no nonnegative joint embedding for n={n}; reduce n*dt")


class _Tagged:
    def __init__(self, fn, method):
        self._fn = fn
        self.method = method

    def __call__(self, rng):
        return self._fn(rng)


def simulate_harmonic(req: SimRequest, path_index: int = 0, sampler=None) -> tuple[Trace, Trace]:
    """Jointly Gaussian (x, v) traces of the harmonic model."""
    draw = sampler or harmonic_sampler(req)
    x, v = draw(rng_for(req.seed, path_index))
    method = getattr(draw, "method", "custom")
    tx = Trace(req.dt, x, 0.0, {**req.trace_meta(path_index, "x"), "method": method})
    tv = Trace(req.dt, v, 0.0, {**req.trace_meta(path_index, "v"), "method": method})
    return tx, tv


# ---------------------------------------------------------------------------
# Ensemble statistics
# ---------------------------------------------------------------------------

def _stack(traces) -> tuple[np.ndarray, float]:
    if isinstance(traces, np.ndarray):
        raise InputError("pass a list of Trace objects")
    traces = list(traces)
    if not traces:
        raise InputError("an ensemble needs at least one trace")
    dt, n = traces[0].dt, len(traces[0])
    for tr in traces[1:]:
        if len(tr) != n or not np.isclose(tr.dt, dt, rtol=1e-12, atol=0):
            raise GridMismatchError("traces do not share a common grid")
    return np.stack([tr.values for tr in traces]), dt


def ensemble_msd(traces) -> CovarianceCurve:
    """Pointwise ensemble mean of x(t_k)^2 with its standard error.

    The first sample (t = 0) is included, so ``lags[0] = 0``.
    """
    x, dt = _stack(traces)
    sq = x * x
    mean = sq.mean(axis=0)
    if sq.shape[0] > 1:
        se = sq.std(axis=0, ddof=1) / np.sqrt(sq.shape[0])
    else:
        se = np.full(mean.shape, np.nan)
    lags = dt * np.arange(x.shape[1])
    return CovarianceCurve(lags, mean, "msd", stderr=se, meta={"n_paths": x.shape[0], "estimator": "ensemble"})


def time_averaged_msd(x: np.ndarray, dt: float, lags) -> CovarianceCurve:
    """Mean of (x(s + t) - x(s))^2 over paths and start times s.

    Valid for processes with stationary increments, such as the free
    particle's displacement. The standard error is taken across paths.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lags = np.asarray(lags, dtype=int)
    if lags.size == 0 or lags.min() < 1 or lags.max() >= x.shape[1]:
        raise InputError("lags must lie in [1, path length)")
    per_path = np.stack([np.mean((x[:, k:] - x[:, :-k]) ** 2, axis=1) for k in lags], axis=1)
    mean = per_path.mean(axis=0)
    if x.shape[0] > 1:
        se = per_path.std(axis=0, ddof=1) / np.sqrt(x.shape[0])
    else:
        se = np.full(mean.shape, np.nan)
    return CovarianceCurve(dt * lags, mean, "msd", stderr=se,
                           meta={"n_paths": x.shape[0], "estimator": "time-averaged"})


def ensemble_autocovariance(x: np.ndarray, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean autocovariance estimate pooled over paths and times,
    with its standard error across independent paths."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    if not 0 <= max_lag < n:
        raise InputError("max_lag must be smaller than the path length")
    per_path = np.stack([np.mean(x[:, : n - k] * x[:, k:], axis=1) for k in range(max_lag + 1)], axis=1)
    mean = per_path.mean(axis=0)
    se = per_path.std(axis=0, ddof=1) / np.sqrt(x.shape[0]) if x.shape[0] > 1 else np.full(mean.shape, np.nan)
    return mean, se
