"""Immutable containers for sampled series and tabulated curves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import InputError


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trace:
    """Uniformly sampled real time series.

    ``values[k]`` is the sample at ``start_time + k * dt``. The array is
    stored read-only, so a trace can be shared freely between threads.
    """

    dt: float
    values: np.ndarray
    start_time: float = 0.0
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InputError(f"dt must be positive, got {self.dt!r}")
        values = _frozen(self.values, "values")
        if values.size == 0:
            raise InputError("a trace needs at least one sample")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_time", float(self.start_time))
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(self.values.size)

    def with_values(self, values, **meta) -> "Trace":
        """New trace on the same grid, metadata merged with ``meta``."""
        return Trace(self.dt, values, self.start_time, {**self.meta, **meta})


@dataclass(frozen=True)
class CovarianceCurve:
    """Tabulated covariance (or mean-square) values against lag.

    ``stderr`` is optional and carries a pointwise standard-error band
    for curves estimated from data.
    """

    lags: np.ndarray
    values: np.ndarray
    kind: str = "displacement"
    stderr: np.ndarray | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    KINDS = ("velocity", "displacement", "cross", "msd", "lifetime")

    def __post_init__(self):
        lags = _frozen(self.lags, "lags")
        values = _frozen(self.values, "values")
        if lags.shape != values.shape:
            raise InputError("lags and values differ in length")
        if np.any(lags < 0) or np.any(np.diff(lags) <= 0):
            raise InputError("lags must be nonnegative and strictly increasing")
        if self.kind not in self.KINDS:
            raise InputError(f"unknown curve kind {self.kind!r}")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            se = _frozen(self.stderr, "stderr")
            if se.shape != values.shape:
                raise InputError("stderr and values differ in length")
            object.__setattr__(self, "stderr", se)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return self.values.size

    @property
    def dt(self) -> float:
        """Lag spacing of a uniform curve."""
        steps = np.diff(self.lags)
        if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise InputError("curve lags are not uniformly spaced")
        return float(steps[0])


@dataclass(frozen=True)
class SpectralCurve:
    omegas: np.ndarray
    values: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        omegas = _frozen(self.omegas, "omegas")
        values = _frozen(self.values, "values")
        if omegas.shape != values.shape:
            raise InputError("omegas and values differ in length")
        if np.any(omegas <= 0) or np.any(np.diff(omegas) <= 0):
            raise InputError("omegas must be positive and strictly increasing")
        if np.any(values < 0):
            raise InputError("power spectra are nonnegative")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", dict(self.meta))


@dataclass(frozen=True)
class LaplaceCurve:
    """Laplace transform tabulated on a positive, increasing s-grid."""

    s: np.ndarray
    values: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        s = _frozen(self.s, "s")
        values = _frozen(self.values, "values")
        if s.shape != values.shape:
            raise InputError("s and values differ in length")
        if s.size == 0 or np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise InputError("s must be positive and strictly increasing")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", dict(self.meta))
