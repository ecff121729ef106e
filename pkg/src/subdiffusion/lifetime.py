"""Fluorescence-lifetime observable lambda(t) = k0 exp(beta (x_eq + x(t)))
and its closed-form multi-time correlations for a stationary Gaussian x.

``cov`` arguments are callables returning C_x at a (nonnegative) lag.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, ParameterError
from .trace import Trace

CovFn = Callable[[float], float]


@dataclass(frozen=True)
class LifetimeParams:
    k0: float = 1.0
    beta: float = 1.0
    x_eq: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.k0) and self.k0 > 0):
            raise ParameterError("k0 must be positive")
        if not (math.isfinite(self.beta) and math.isfinite(self.x_eq)):
            raise ParameterError("beta and x_eq must be finite")

    def log_mean(self, c0: float) -> float:
        """log E[lambda] = log k0 + beta x_eq + beta^2 C_x(0) / 2."""
        return math.log(self.k0) + self.beta * self.x_eq + 0.5 * self.beta**2 * c0


def lifetime_map(x: Trace, lp: LifetimeParams) -> Trace:
    """Pointwise lambda_k = k0 exp(beta (x_eq + x_k))."""
    lam = lp.k0 * np.exp(lp.beta * (lp.x_eq + x.values))
    return x.with_values(lam, kind="lifetime", k0=lp.k0, beta=lp.beta, x_eq=lp.x_eq)


def distance_from_lifetime(lam: Trace, lp: LifetimeParams) -> Trace:
    """Inverse map x = log(lambda / k0) / beta - x_eq (needs beta != 0)."""
    if lp.beta == 0:
        raise ParameterError("the map is not invertible for beta = 0")
    if np.any(lam.values <= 0):
        raise InputError("lifetimes must be positive")
    return lam.with_values(np.log(lam.values / lp.k0) / lp.beta - lp.x_eq, kind="x")


def lognormal_moment(a: float, cov: CovFn, times: Sequence[float]) -> float:
    """E[prod_i exp(a x(t_i))] = exp{(n/2) a^2 C(0) + a^2 sum_{i<j} C(t_j - t_i)}."""
    t = np.asarray(times, dtype=float).ravel()
    if t.size == 0:
        return 1.0
    if np.any(np.diff(t) < 0):
        raise InputError("times must be sorted in nondecreasing order")
    return math.exp(_log_moment(a, cov, t))


def _log_moment(a, cov, t) -> float:
    pair = math.fsum(cov(t[j] - t[i]) for i in range(t.size) for j in range(i + 1, t.size))
    return a * a * (0.5 * t.size * cov(0.0) + pair)


def centered_moment(lp: LifetimeParams, cov: CovFn, times: Sequence[float]) -> float:
    """E[prod_i (lambda(t_i) - E lambda)] by inclusion-exclusion over
    subsets, each subset moment from :func:`lognormal_moment`.

    A generic route, independent of the closed forms below.
    """
    t = np.sort(np.asarray(times, dtype=float).ravel())
    n = t.size
    total = []
    for r in range(n + 1):
        for idx in itertools.combinations(range(n), r):
            # E[prod_S lambda] / mean^|S| = exp(beta^2 sum_{i<j in S} C)
            sub = t[list(idx)]
            pair = sum(cov(sub[j] - sub[i]) for i in range(r) for j in range(i + 1, r))
            total.append((-1) ** (n - r) * math.exp(lp.beta**2 * pair))
    return math.exp(n * lp.log_mean(cov(0.0))) * math.fsum(total)


def _prefactor(lp: LifetimeParams, cov: CovFn, n: int) -> float:
    # k0^n e^{n beta x_eq + n beta^2 C(0)/2}, formed in log space
    return math.exp(n * lp.log_mean(cov(0.0)))


_EXP_SAFE = 700.0


def _scaled_sum(log_pref: float, exps, coefs) -> float:
    """exp(log_pref) * sum_i coefs_i exp(exps_i), shifted by the largest
    exponent so neither factor overflows on its own."""
    top = max(exps)
    s = math.fsum(c * math.exp(e - top) for e, c in zip(exps, coefs))
    if s == 0.0:
        return 0.0
    return math.copysign(math.exp(log_pref + top + math.log(abs(s))), s)


def _safe(log_pref: float, top: float) -> bool:
    return top < _EXP_SAFE and abs(log_pref) < _EXP_SAFE


def lifetime_autocov(lp: LifetimeParams, cov: CovFn, t: float) -> float:
    """Cov[lambda(0), lambda(t)] = k0^2 e^{2 beta x_eq + beta^2 C(0)} (e^{beta^2 C(t)} - 1)."""
    if t < 0:
        raise InputError("lag must be nonnegative")
    b, lp2 = lp.beta**2, 2 * lp.log_mean(cov(0.0))
    ct = cov(t)
    if _safe(lp2, b * ct):
        return _prefactor(lp, cov, 2) * math.expm1(b * ct)
    return _scaled_sum(lp2, [b * ct, 0.0], [1.0, -1.0])


def three_step_corr(lp: LifetimeParams, cov: CovFn, t1: float, t2: float) -> float:
    """E[dl(0) dl(t1) dl(t1+t2)]:

    k0^3 e^{3 beta x_eq + 3 beta^2 C(0)/2} {e^{b(C1+C2+C12)} - e^{b C1}
    - e^{b C2} - e^{b C12} + 2}, b = beta^2.
    """
    if t1 < 0 or t2 < 0:
        raise InputError("lags must be nonnegative")
    b = lp.beta**2
    # sorting the lags makes the argument swap exact in floating point
    lo, hi = sorted((t1, t2))
    c1, c2, c12 = cov(lo), cov(hi), cov(lo + hi)
    log_pref = 3 * lp.log_mean(cov(0.0))
    if _safe(log_pref, b * (abs(c1) + abs(c2) + abs(c12))):
        # the bracket equals e1 e2 + e1 e12 + e2 e12 + e1 e2 e12 with e = expm1,
        # which avoids cancellation when the covariances are small
        e1, e2, e12 = math.expm1(b * c1), math.expm1(b * c2), math.expm1(b * c12)
        return math.exp(log_pref) * (e1 * e2 + (e1 + e2) * e12 + e1 * e2 * e12)
    return _scaled_sum(log_pref, [b * (c1 + c2 + c12), b * c1, b * c2, b * c12, 0.0], [1, -1, -1, -1, 2])


def four_step_corr(lp: LifetimeParams, cov: CovFn, t1: float, t2: float, t3: float) -> float:
    """E[dl(0) dl(t1) dl(t1+t2) dl(t1+t2+t3)] from the twelve-term closed form."""
    if min(t1, t2, t3) < 0:
        raise InputError("lags must be nonnegative")
    b = lp.beta**2
    c1, c2, c3 = cov(t1), cov(t2), cov(t3)
    c12, c23, c123 = cov(t1 + t2), cov(t2 + t3), cov(t1 + t2 + t3)
    exps = [c1 + c2 + c3 + c12 + c23 + c123, c1 + c2 + c12, c1 + c23 + c123, c12 + c3 + c123,
            c2 + c3 + c23, c1, c2, c3, c12, c23, c123, 0.0]
    coefs = [1, -1, -1, -1, -1, 1, 1, 1, 1, 1, 1, -3]
    return _scaled_sum(4 * lp.log_mean(cov(0.0)), [b * e for e in exps], coefs)


def time_symmetry_pairs(lp: LifetimeParams, cov: CovFn, t_grid) -> np.ndarray:
    """Rows (t, E[dl(0) dl(t) dl(3t)], E[dl(0) dl(2t) dl(3t)])."""
    t = np.asarray(t_grid, dtype=float).ravel()
    if np.any(t <= 0):
        raise InputError("time grid must be positive")
    left = [three_step_corr(lp, cov, s, 2 * s) for s in t]
    right = [three_step_corr(lp, cov, 2 * s, s) for s in t]
    return np.column_stack([t, left, right])


def empirical_multistep(lam: np.ndarray, offsets: Sequence[int]) -> tuple[float, float]:
    """Sample E[prod_i dl(k + o_i)] along a trace (mean removed), with a
    naive standard error that ignores serial correlation."""
    lam = np.asarray(lam, dtype=float)
    d = lam - lam.mean()
    offs = np.asarray(offsets, dtype=int)
    span = int(offs.max())
    if span >= d.size:
        raise InputError("offsets exceed trace length")
    prod = np.ones(d.size - span)
    for o in offs:
        prod = prod * d[o: d.size - span + o]
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(prod.size))
