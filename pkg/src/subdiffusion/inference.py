"""Estimators used to confront the model with data: empirical
autocorrelation, overdamped-model fitting, Laplace-domain memory-kernel
recovery, Boltzmann inversion of a stationary trace and MSD-based Hurst
estimation.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .errors import (
    BandError,
    IllPosedError,
    InputError,
    ParameterError,
    SingularRecoveryError,
)
from .params import PhysicalParams, check_hurst
from .specfun import mittag_leffler
from .trace import CovarianceCurve, LaplaceCurve, Trace

log = logging.getLogger(__name__)

H_STARTS = (0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
POINTS_PER_DECADE = 20


# ---------------------------------------------------------------------------
# Empirical autocorrelation
# ---------------------------------------------------------------------------

def empirical_autocorrelation(trace: Trace, max_lag: int) -> CovarianceCurve:
    """C^(k) = (1/n) sum_i (x_i - xbar)(x_{i+k} - xbar), k = 0..max_lag.

    The divisor n keeps the estimate positive semidefinite. The sample
    mean is kept in the curve metadata (``mean``).
    """
    x = np.asarray(trace.values, dtype=float)
    n = x.size
    max_lag = int(max_lag)
    if not 0 <= max_lag < n:
        raise InputError(f"max_lag must lie in [0, {n - 1}], got {max_lag}")
    d = x - x.mean()
    size = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1] / n
    kind = "lifetime" if trace.meta.get("kind") == "lifetime" else "displacement"
    meta = {k: v for k, v in trace.meta.items() if k in ("h", "seed", "regime", "kind", "k0", "beta", "x_eq")}
    meta.update(mean=float(x.mean()), n=n, estimator="divisor-n")
    return CovarianceCurve(trace.dt * np.arange(max_lag + 1), acov, kind, meta=meta)


# ---------------------------------------------------------------------------
# Overdamped model fit
# ---------------------------------------------------------------------------

def overdamped_tau(h: float, ratio: float) -> float:
    """tau from h and zeta/(m psi): (ratio * Gamma(2h+1))^(1/(2-2h))."""
    return (ratio * special.gamma(2 * h + 1)) ** (1.0 / (2 - 2 * h))


def normalized_lifetime_model(t, h: float, ratio: float, amp: float) -> np.ndarray:
    """Cov[lambda(0), lambda(t)] / Var[lambda] for the overdamped model:

        (exp(amp * E(t)) - 1) / (exp(amp) - 1),
        E(t) = E_{2-2h}(-(t/tau)^(2-2h)),  amp = beta^2 kbt / (m psi).
    """
    t = np.abs(np.asarray(t, dtype=float))
    alpha = 2 - 2 * h
    e = np.asarray(mittag_leffler(alpha, -((t / overdamped_tau(h, ratio)) ** alpha)), dtype=float)
    if amp <= 1.0:
        return np.expm1(amp * e) / math.expm1(amp)
    # factor out exp(amp) so large amplitudes do not overflow
    return np.exp(amp * (e - 1)) * np.expm1(-amp * e) / math.expm1(-amp)


@dataclass
class FitResult:
    """Least-squares estimate of (h, zeta/(m psi), beta^2 kbt/(m psi)).

    ``scale_hat`` is k0^2 exp(2 beta x_eq + amp), recovered from C^(0)
    once the shape is fitted. ``cov`` is the asymptotic covariance of
    (h, ratio, amp); ``converged`` is False when the optimizer stopped
    without meeting its tolerances or a parameter sits on a bound.
    """

    h_hat: float
    ratio_hat: float
    amp_hat: float
    tau_hat: float
    scale_hat: float
    residual_norm: float
    converged: bool
    cov: np.ndarray | None = None
    n_lags: int = 0
    message: str = ""
    starts: list = field(default_factory=list)

    def stderr(self) -> np.ndarray:
        if self.cov is None:
            return np.full(3, np.nan)
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    def as_dict(self) -> dict:
        se = self.stderr()
        return {"h_hat": self.h_hat, "ratio_hat": self.ratio_hat, "amp_hat": self.amp_hat,
                "tau_hat": self.tau_hat, "scale_hat": self.scale_hat,
                "h_stderr": se[0], "ratio_stderr": se[1], "amp_stderr": se[2],
                "residual_norm": self.residual_norm, "converged": self.converged,
                "n_lags": self.n_lags, "message": self.message}


_H_LO, _H_HI = 0.5 + 1e-6, 1.0 - 1e-6
_LOG_AMP_MAX = math.log(500.0)  # keeps exp(amp) finite


def fit_overdamped_model(curve: CovarianceCurve, h_starts=H_STARTS, ratio_start: float | None = None,
                         amp_start: float = 1.0, max_lag: int | None = None, xtol: float = 1e-14) -> FitResult:
    """Fit the overdamped lifetime autocorrelation to an empirical curve.

    Residuals are taken on the variance-normalized curve C^(k)/C^(0) for
    k >= 1 with uniform weights; each start of the h-grid runs a bounded
    trust-region Gauss-Newton solve in (h, log ratio, log amp). The best
    residual wins, ties going to the lowest h.
    """
    lags = np.asarray(curve.lags, dtype=float)
    vals = np.asarray(curve.values, dtype=float)
    if max_lag is not None:
        lags, vals = lags[: max_lag + 1], vals[: max_lag + 1]
    if lags.size < 11:
        raise InputError("fitting needs at least 10 positive lags")
    if lags[0] != 0:
        raise InputError("the curve must start at lag 0")
    c0 = vals[0]
    if not c0 > 0 or np.ptp(vals) <= 1e-12 * abs(c0):
        raise IllPosedError("flat or degenerate autocorrelation curve carries no information")
    target = vals[1:] / c0
    t = lags[1:]
    if ratio_start is None:
        # crude time scale: first lag where the normalized curve falls below 1/e
        below = np.nonzero(target < math.exp(-1))[0]
        t_e = t[below[0]] if below.size else t[-1]
    starts = []

    def resid(theta):
        h, lr, la = theta
        return normalized_lifetime_model(t, h, math.exp(lr), math.exp(la)) - target

    best = None
    for h0 in h_starts:
        h0 = float(np.clip(h0, _H_LO, _H_HI))
        r0 = ratio_start if ratio_start is not None else t_e ** (2 - 2 * h0) / special.gamma(2 * h0 + 1)
        x0 = np.array([h0, math.log(r0), math.log(amp_start)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                sol = optimize.least_squares(resid, x0, bounds=([_H_LO, -30, -30], [_H_HI, 30, _LOG_AMP_MAX]),
                                             method="trf", x_scale=[0.1, 1.0, 1.0],
                                             xtol=xtol, ftol=1e-15, gtol=1e-15, max_nfev=2000)
            except (ValueError, FloatingPointError, ParameterError) as exc:
                log.debug("start h=%g failed: %s", h0, exc)
                continue
        norm = float(np.sqrt(np.sum(sol.fun**2)))
        starts.append((h0, float(sol.x[0]), norm, bool(sol.success)))
        key = (round(norm, 14), float(sol.x[0]))
        if best is None or key < best[0]:
            best = (key, sol)
    if best is None:
        return FitResult(math.nan, math.nan, math.nan, math.nan, math.nan, math.inf, False,
                         n_lags=t.size, message="all starts failed", starts=starts)
    sol = best[1]
    h, ratio, amp = float(sol.x[0]), math.exp(sol.x[1]), math.exp(sol.x[2])
    on_bound = h <= _H_LO * (1 + 1e-9) or h >= _H_HI * (1 - 1e-9)
    amp_bound = sol.x[2] >= _LOG_AMP_MAX - 1e-9
    cov = _param_covariance(sol, ratio, amp)
    converged = bool(sol.success) and not on_bound and not amp_bound
    return FitResult(h, ratio, amp, overdamped_tau(h, ratio), c0 / math.expm1(amp),
                     float(np.sqrt(np.sum(sol.fun**2))), converged, cov, t.size,
                     "h estimate on the admissible bound" if on_bound
                     else "amplitude on its upper bound; ratio and amp are not identified" if amp_bound
                     else sol.message, starts)


def _param_covariance(sol, ratio, amp):
    j = sol.jac
    dof = max(j.shape[0] - j.shape[1], 1)
    s2 = float(np.sum(sol.fun**2)) / dof
    try:
        inv = np.linalg.inv(j.T @ j)
    except np.linalg.LinAlgError:
        return None
    # back to (h, ratio, amp) from (h, log ratio, log amp)
    d = np.diag([1.0, ratio, amp])
    return s2 * d @ inv @ d


# ---------------------------------------------------------------------------
# Laplace transform and kernel recovery
# ---------------------------------------------------------------------------

def resolvable_band(curve: CovarianceCurve) -> tuple[float, float]:
    """[10 / T_total, 1 / (10 dt)] for a uniformly tabulated curve."""
    dt = curve.dt
    total = float(curve.lags[-1])
    return 10.0 / total, 1.0 / (10.0 * dt)


def laplace_grid(curve: CovarianceCurve, per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    """Log-spaced s-grid spanning the resolvable band."""
    lo, hi = resolvable_band(curve)
    if not lo < hi:
        raise InputError("curve too short to resolve any Laplace variable")
    n = max(int(math.ceil(per_decade * math.log10(hi / lo))) + 1, 2)
    return np.geomspace(lo, hi, n)


def _tail_fit(t, c):
    """Fit c ~ a t^(-p) on the last decade of positive values."""
    sel = (t >= t[-1] / 10) & (c > 0)
    if sel.sum() < 3:
        return None
    slope, intercept = np.polyfit(np.log(t[sel]), np.log(c[sel]), 1)
    return math.exp(intercept), -slope


def laplace_transform_curve(curve: CovarianceCurve, s_grid=None, tail: bool = True) -> LaplaceCurve:
    """c(s) = int_0^inf exp(-s t) C(t) dt from a tabulated curve.

    Trapezoidal rule on the tabulated range plus, beyond the last lag, the
    transform of a power law a t^(-p) fitted to the last decade.
    """
    lags = np.asarray(curve.lags, dtype=float)
    vals = np.asarray(curve.values, dtype=float)
    if lags[0] != 0:
        raise InputError("the curve must start at lag 0")
    lo, hi = resolvable_band(curve)
    s = laplace_grid(curve) if s_grid is None else np.atleast_1d(np.asarray(s_grid, dtype=float))
    bad = s[(s < lo * (1 - 1e-12)) | (s > hi * (1 + 1e-12))]
    if bad.size:
        raise BandError(f"s = {bad[0]:.6g} is not resolvable from this curve", lo, hi)
    s = np.sort(s)
    body = integrate.trapezoid(np.exp(-np.outer(s, lags)) * vals, lags, axis=1)
    fit = _tail_fit(lags[1:], vals[1:]) if tail else None
    tails = np.zeros_like(s)
    if fit is not None:
        a, p = fit
        big_t = lags[-1]
        for i, si in enumerate(s):
            f = lambda u: a * math.exp(-si * u) * u ** (-p)
            tails[i] = integrate.quad(f, big_t, math.inf, limit=200)[0]
    meta = {**curve.meta, "transform": "laplace", "band_lo": lo, "band_hi": hi}
    if fit is not None:
        meta.update(tail_amp=fit[0], tail_exponent=fit[1])
    return LaplaceCurve(s, body + tails, meta)


def overdamped_laplace(p: PhysicalParams, h: float, s):
    """Exact transform of the Mittag-Leffler covariance:
    (kbt/(m psi)) (1/s) / (1 + (tau s)^-(2-2h))."""
    from .analytic import tau

    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ParameterError("s must be positive")
    u = (tau(p, h) * s) ** (-(2 - 2 * check_hurst(h)))
    out = p.var_x / s / (1 + u)
    return float(out) if out.ndim == 0 else out


def _mpsi(params: PhysicalParams) -> float:
    return params.m * params.require_potential()


def recover_kernel(cov_laplace: LaplaceCurve, params: PhysicalParams, rel_tol: float = 1e-10) -> LaplaceCurve:
    """K(s) = (m psi / zeta) m psi c(s) / (kbt - m psi s c(s)).

    Raises :class:`SingularRecoveryError` where the denominator is within
    ``rel_tol * kbt`` of zero.
    """
    mpsi = _mpsi(params)
    s, c = cov_laplace.s, cov_laplace.values
    den = params.kbt - mpsi * s * c
    bad = np.nonzero(np.abs(den) <= rel_tol * params.kbt)[0]
    if bad.size:
        raise SingularRecoveryError("recovery denominator kbt - m psi s c(s) vanishes", float(s[bad[0]]))
    k = (mpsi / params.zeta) * mpsi * c / den
    return LaplaceCurve(s, k, {**cov_laplace.meta, "transform": "kernel"})


def covariance_from_kernel(kernel_laplace: LaplaceCurve, params: PhysicalParams) -> LaplaceCurve:
    """Forward map c(s) = (kbt zeta / m psi) K(s) / (m psi + zeta s K(s))."""
    mpsi = _mpsi(params)
    s, k = kernel_laplace.s, kernel_laplace.values
    den = mpsi + params.zeta * s * k
    if np.any(den == 0):
        raise SingularRecoveryError("forward denominator vanishes", float(s[np.argmin(np.abs(den))]))
    c = params.kbt * params.zeta / mpsi * k / den
    return LaplaceCurve(s, c, {**kernel_laplace.meta, "transform": "laplace"})


def loglog_slope(curve: LaplaceCurve, lo: float | None = None, hi: float | None = None) -> tuple[float, float]:
    """Least-squares slope of log|value| against log s on [lo, hi], with stderr."""
    s, v = curve.s, curve.values
    sel = np.ones(s.size, bool)
    if lo is not None:
        sel &= s >= lo
    if hi is not None:
        sel &= s <= hi
    sel &= v > 0
    if sel.sum() < 3:
        raise InputError("need at least three positive points for a slope")
    return _ols_slope(np.log(s[sel]), np.log(v[sel]))


def _ols_slope(x, y):
    coef, cov = np.polyfit(x, y, 1, cov="unscaled")
    resid = y - np.polyval(coef, x)
    dof = max(x.size - 2, 1)
    se = math.sqrt(max(cov[0, 0] * float(resid @ resid) / dof, 0.0))
    return float(coef[0]), se


# ---------------------------------------------------------------------------
# Potential reconstruction
# ---------------------------------------------------------------------------

@dataclass
class PotentialCurve:
    x: np.ndarray
    u: np.ndarray
    counts: np.ndarray
    width: float
    meta: dict = field(default_factory=dict)


def reconstruct_potential(trace: Trace, n_bins: int | None = None, kbt: float = 1.0) -> PotentialCurve:
    """Boltzmann inversion U(x) = -kbt log P(x), shifted to min U = 0.

    Equal-width bins over mean +- 4 SD; the default bin count follows the
    Freedman-Diaconis width. Empty bins are dropped.
    """
    x = np.asarray(trace.values, dtype=float)
    if not kbt > 0:
        raise ParameterError("kbt must be positive")
    if x.size < 100:
        raise InputError("potential reconstruction needs at least 100 samples")
    mu, sd = x.mean(), x.std()
    if not sd > 0:
        raise InputError("trace has no spread; the density support is degenerate")
    lo, hi = mu - 4 * sd, mu + 4 * sd
    if n_bins is None:
        q75, q25 = np.percentile(x, [75, 25])
        width = 2 * (q75 - q25) * x.size ** (-1.0 / 3.0)
        n_bins = max(int(math.ceil((hi - lo) / width)), 10) if width > 0 else 10
    n_bins = int(n_bins)
    if n_bins < 10:
        raise InputError("use at least 10 bins")
    if x.size < 100 * n_bins:
        log.warning("only %d samples for %d bins; the density estimate will be noisy", x.size, n_bins)
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    keep = counts > 0
    density = counts[keep] / (x.size * width)
    u = -kbt * np.log(density)
    u -= u.min()
    return PotentialCurve(centers[keep], u, counts[keep], float(width),
                          {"n_bins": n_bins, "kbt": kbt, "mean": float(mu), "sd": float(sd)})


def potential_curvature(pot: PotentialCurve) -> tuple[float, float]:
    """Curvature U'' of a weighted quadratic fit, with its standard error.

    Weights are the bin counts, the inverse variance of each log-density.
    """
    if pot.x.size < 3:
        raise InputError("need at least three occupied bins")
    w = np.sqrt(pot.counts.astype(float))
    coef, cov = np.polyfit(pot.x, pot.u, 2, w=w, cov=True)
    return float(2 * coef[0]), float(2 * math.sqrt(max(cov[0, 0], 0.0)))


# ---------------------------------------------------------------------------
# Hurst exponent from the MSD
# ---------------------------------------------------------------------------

@dataclass
class HurstEstimate:
    h: float
    stderr: float
    slope: float
    t_min: float
    t_max: float
    boundary: bool


def estimate_hurst_msd(msd, t_min: float | None = None, t_max: float | None = None) -> HurstEstimate:
    """H = 1 - b/2 from the log-log MSD slope b over [t_min, t_max].

    ``msd`` is a CovarianceCurve of MSD values or a list of displacement
    traces (turned into an ensemble MSD). The window must span at least
    1.5 decades. ``boundary`` flags estimates at or beyond 1/2 or 1.
    """
    if not isinstance(msd, CovarianceCurve):
        from .simulate import ensemble_msd

        msd = ensemble_msd(msd)
    t, v = np.asarray(msd.lags), np.asarray(msd.values)
    sel = (t > 0) & (v > 0)
    if t_min is not None:
        sel &= t >= t_min
    if t_max is not None:
        sel &= t <= t_max
    if sel.sum() < 3:
        raise InputError("need at least three positive MSD points in the window")
    ts, vs = t[sel], v[sel]
    if math.log10(ts[-1] / ts[0]) < 1.5 - 1e-9:
        raise InputError("the MSD window must span at least 1.5 decades")
    # even weights per log-time: thin dense linear grids before regressing
    idx = np.unique(np.searchsorted(ts, np.geomspace(ts[0], ts[-1], min(ts.size, 60))).clip(0, ts.size - 1))
    b, se = _ols_slope(np.log(ts[idx]), np.log(vs[idx]))
    h = 1 - b / 2
    return HurstEstimate(h, se / 2, b, float(ts[0]), float(ts[-1]), bool(h <= 0.5 + 1e-9 or h >= 1 - 1e-9))
