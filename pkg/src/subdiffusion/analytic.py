"""Closed-form and quadrature evaluators for the model's second-order
structure: velocity spectrum and covariance of the free particle, the
mean-squared displacement and its power-law asymptote, the four
covariances of the harmonic model, and the Mittag-Leffler covariance of
the overdamped harmonic model with its spectral density.

Every covariance is computed from its spectral or Mittag-Leffler form.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, ParameterError, SingularityError
from .params import PhysicalParams, check_hurst
from .specfun import (
    kernel_fourier_full,
    kernel_fourier_half,
    mittag_leffler,
    oscillatory_quadrature,
)
from .trace import CovarianceCurve, SpectralCurve

DEFAULT_TOL = 1e-8


class _Consts:
    """Recurrent combinations of h: Gamma(2h+1), sin(h pi), cos(h pi)."""

    def __init__(self, h: float):
        self.h = check_hurst(h)
        self.g = special.gamma(2 * self.h + 1)
        self.s = math.sin(self.h * math.pi)
        self.c = math.cos(self.h * math.pi)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# Free particle
# ---------------------------------------------------------------------------

def velocity_spectral_density(p: PhysicalParams, h: float, omega):
    """C~_v(w) = kbt zeta K~(w) / |zeta K~+(w) - i m w|^2, for w != 0."""
    p.require_free()
    w = np.asarray(omega, dtype=float)
    if np.any(w == 0):
        raise SingularityError("velocity spectral density is evaluated at omega != 0")
    num = p.kbt * p.zeta * kernel_fourier_full(h, w)
    den = np.abs(p.zeta * kernel_fourier_half(h, w) - 1j * p.m * w) ** 2
    return _out(num / den)


def _velocity_spectrum(p: PhysicalParams, k: _Consts):
    """Same density in the form 2 kbt zeta g s w^(2h-1) / P(w^2h), which
    is finite at w = 0 and free of complex arithmetic."""
    a = 2.0 * p.kbt * p.zeta * k.g * k.s
    b0 = (p.zeta * k.g) ** 2
    b1 = 2.0 * p.m * p.zeta * k.g * k.c
    b2 = p.m**2
    h = k.h

    def spectrum(w):
        w = np.asarray(w, dtype=float)
        u = w ** (2 * h)
        return a * w ** (2 * h - 1) / (b0 + b1 * u + b2 * u * u)

    return spectrum


def velocity_autocovariance(p: PhysicalParams, h: float, t: float, tol: float = DEFAULT_TOL) -> float:
    """C_v(t) = (1/pi) int_0^inf C~_v(w) cos(t w) dw, even in t."""
    p.require_free()
    k = _Consts(h)
    spec = _velocity_spectrum(p, k)
    val = oscillatory_quadrature(
        spec, abs(float(t)), tol,
        origin_exponent=2 * k.h - 1, tail_exponent=1 + 2 * k.h,
        points=[_velocity_knee(p, k)], scale=p.kbt / p.m,
    )
    return val / math.pi


def _velocity_knee(p: PhysicalParams, k: _Consts) -> float:
    """Frequency where inertia and memory friction balance."""
    return (p.zeta * k.g / p.m) ** (1.0 / (2 * k.h))


def velocity_time_scale(p: PhysicalParams, h: float) -> float:
    """(m / (zeta Gamma(2h+1)))^(1/2h), the inertial relaxation time."""
    return 1.0 / _velocity_knee(p, _Consts(h))


def velocity_autocovariance_asymptotic(p: PhysicalParams, h: float, t, terms: int | None = None):
    """Large-lag expansion of C_v obtained from the small-w expansion of the
    velocity spectrum, term by term:

        C_v(t) ~ kbt/(pi zeta g) sum_j (-1)^(j-1) sin(2 pi h j) Gamma(2 h j)
                 (m/(zeta g))^(j-1) t^(-2hj).

    The series is divergent; it is truncated at its smallest term unless
    ``terms`` is given. Accurate only for t beyond
    :func:`velocity_asymptotic_lag`.
    """
    p.require_free()
    k = _Consts(h)
    t = np.abs(np.asarray(t, dtype=float))
    if np.any(t == 0):
        raise SingularityError("asymptotic expansion is singular at t = 0")
    tau_v = velocity_time_scale(p, h)
    j = np.arange(1, (terms or 60) + 1, dtype=float)
    x = (t / tau_v).ravel()[:, None]
    logterm = special.gammaln(2 * k.h * j)[None, :] - 2 * k.h * j[None, :] * np.log(x)
    if terms is None:
        stop = np.maximum(np.argmin(logterm, axis=1), 1)
    else:
        stop = np.full(x.shape[0], terms)
    sign = (-1.0) ** (j - 1) * np.sin(2 * math.pi * k.h * j)
    mask = np.arange(j.size)[None, :] < stop[:, None]
    series = np.sum(np.where(mask, sign[None, :] * np.exp(logterm), 0.0), axis=1)
    # (kbt/(pi zeta g)) * (m/(zeta g))^(j-1) t^-2hj = kbt/(pi m) (t/tau_v)^-2hj
    out = p.kbt / (math.pi * p.m) * series
    return _out(out.reshape(t.shape))


def velocity_asymptotic_lag(p: PhysicalParams, h: float, tol: float = 1e-12) -> float:
    """Lag beyond which :func:`velocity_autocovariance_asymptotic` is
    accurate to ``tol * kbt/m``.

    The neglected part decays like exp(-|cos(pi/2h)| t / tau_v), set by the
    complex poles of the Laplace-domain covariance.
    """
    k = _Consts(h)
    rate = abs(math.cos(math.pi / (2 * k.h)))
    return velocity_time_scale(p, h) * max(math.log(2.0 / (k.h * tol)) / rate, 10.0)


def velocity_autocovariance_grid(p: PhysicalParams, h: float, dt: float, n: int,
                                 tol: float = DEFAULT_TOL) -> np.ndarray:
    """C_v(k dt) for k = 0..n-1: quadrature up to
    :func:`velocity_asymptotic_lag`, the asymptotic series beyond."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    lags = dt * np.arange(int(n))
    out = np.empty(lags.size)
    cut = velocity_asymptotic_lag(p, h, tol=tol * 1e-2)
    near = lags < cut
    for i in np.nonzero(near)[0]:
        out[i] = velocity_autocovariance(p, h, lags[i], tol)
    if (~near).any():
        out[~near] = velocity_autocovariance_asymptotic(p, h, lags[~near])
    return out


def _quad(f, a, b, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(f, a, b, limit=500, **kw)[:2]


def msd_free(p: PhysicalParams, h: float, t: float, tol: float = DEFAULT_TOL) -> float:
    """Var x(t) = (2/pi) int_0^inf C~_v(w) (1 - cos t w) / w^2 dw."""
    p.require_free()
    t = float(t)
    if t < 0:
        raise ParameterError("msd_free needs t >= 0")
    if t == 0:
        return 0.0
    k = _Consts(h)
    spec = _velocity_spectrum(p, k)
    wc = 1.0 / t
    eps = min(tol * 1e-2, 1e-10)
    # head: u = w^(2h) removes the w^(2h-1) endpoint behaviour
    e = 2 * k.h

    def head(u):
        w = u ** (1.0 / e)
        return spec(w) * 2.0 * math.sin(0.5 * t * w) ** 2 / (w * w) * w ** (1.0 - e) / e

    knee = _velocity_knee(p, k)
    pts = [knee**e] if knee < wc else None
    a, ea = _quad(head, 0.0, wc**e, epsabs=0.0, epsrel=eps, points=pts)
    over = lambda w: spec(w) / (w * w)
    edges = [wc] + ([knee] if knee > wc else []) + [math.inf]
    b = eb = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, er = _quad(over, lo, hi, epsabs=0.0, epsrel=eps)
        b += v
        eb += er
    c, ec = _quad(over, wc, math.inf, weight="cos", wvar=t, limlst=200, epsabs=eps * abs(b))
    total = 2.0 / math.pi * (a + b - c)
    err = 2.0 / math.pi * (ea + eb + ec)
    if not math.isfinite(total) or err > tol * abs(total):
        raise AccuracyError("msd quadrature did not converge", err / max(abs(total), 1e-300))
    return total


def msd_prefactor(p: PhysicalParams, h: float) -> float:
    """(kbt/zeta) sin(2h pi) / (pi h (1-2h)(2-2h)); positive on (1/2, 1)."""
    h = check_hurst(h)
    return p.kbt / p.zeta * math.sin(2 * h * math.pi) / (math.pi * h * (1 - 2 * h) * (2 - 2 * h))


def msd_asymptote(p: PhysicalParams, h: float, t):
    """Large-time mean-squared displacement prefactor * t^(2-2h)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("msd_asymptote needs t > 0")
    return _out(msd_prefactor(p, h) * t ** (2 - 2 * check_hurst(h)))


# ---------------------------------------------------------------------------
# Harmonic potential with inertia
# ---------------------------------------------------------------------------

def _harmonic_denominator(p: PhysicalParams, k: _Consts):
    """|m psi - m w^2 - i w zeta K~+(w)|^2 in real arithmetic, w > 0."""
    mpsi = p.m * p.psi
    zg = p.zeta * k.g
    h = k.h

    def den(w):
        w = np.asarray(w, dtype=float)
        a = w ** (2 - 2 * h)
        return (mpsi - p.m * w * w - zg * k.c * a) ** 2 + (zg * k.s * a) ** 2

    return den


def harmonic_spectra(p: PhysicalParams, h: float):
    """The three spectral integrands of the harmonic model (w > 0):
    x-x, the printed cross term, and v-v, each including the factor
    kbt zeta K~(w) / |D(w)|^2."""
    p.require_potential()
    k = _Consts(h)
    den = _harmonic_denominator(p, k)
    amp = 2.0 * p.kbt * p.zeta * k.g * k.s
    hh = k.h

    def xx(w):
        w = np.asarray(w, dtype=float)
        return amp * w ** (1 - 2 * hh) / den(w)

    def xv(w):
        w = np.asarray(w, dtype=float)
        return amp * w ** (2 - 2 * hh) / den(w)

    def vv(w):
        w = np.asarray(w, dtype=float)
        return amp * w ** (3 - 2 * hh) / den(w)

    return xx, xv, vv


def harmonic_covariances(p: PhysicalParams, h: float, t: float, tol: float = DEFAULT_TOL) -> dict:
    """Stationary covariances of the harmonic model at lag ``t``.

    Returns ``{'xx', 'xv', 'vx', 'vv'}`` with xx = E[x(0)x(t)],
    xv = E[x(0)v(t)], vx = E[v(0)x(t)], vv = E[v(0)v(t)]. The two cross
    terms are the sine transform of the printed integrand
    i w K~(w)/|D|^2, identical for xv and vx as the closed form states.
    Note that stationarity alone forces E[x(0)v(t)] = -E[v(0)x(t)]; the
    physically consistent cross covariance is :func:`harmonic_cross_covariance`.
    """
    p.require_potential()
    k = _Consts(h)
    xx_f, xv_f, vv_f = harmonic_spectra(p, h)
    t = float(t)
    pts = _harmonic_points(p, k)
    sx, sv = p.kbt / (p.m * p.psi), p.kbt / p.m
    xx = oscillatory_quadrature(xx_f, abs(t), tol, origin_exponent=1 - 2 * k.h,
                                tail_exponent=3 + 2 * k.h, points=pts, scale=sx) / math.pi
    vv = oscillatory_quadrature(vv_f, abs(t), tol, origin_exponent=3 - 2 * k.h,
                                tail_exponent=1 + 2 * k.h, points=pts, scale=sv) / math.pi
    if t == 0:
        xv = 0.0
    else:
        xv = math.copysign(1.0, t) * oscillatory_quadrature(
            xv_f, abs(t), tol, kind="sin", origin_exponent=2 - 2 * k.h,
            tail_exponent=2 + 2 * k.h, points=pts, scale=math.sqrt(sx * sv)) / math.pi
    return {"xx": xx, "xv": xv, "vx": xv, "vv": vv}


def harmonic_cross_covariance(p: PhysicalParams, h: float, t: float, tol: float = DEFAULT_TOL) -> float:
    """E[x(0) v(t)] = d/dt E[x(0)x(t)] = -(1/pi) int w S_xx(w) sin(t w) dw.

    Odd in t; E[v(0)x(t)] is its negative.
    """
    t = float(t)
    if t == 0:
        return 0.0
    return -harmonic_covariances(p, h, t, tol)["xv"]


def _harmonic_series(p: PhysicalParams, h: float, beta_max: float = 40.0):
    """Exponents b and coefficients c of the small-s expansion of the
    Laplace transform of E[x(0)x(t)], sum_b c s^b, non-integer b only.

    With a = 2-2h, G = zeta g/m and C0 = kbt/(m psi),

        c~(s) = C0 (s + G s^(a-1)) / (s^2 + G s^a + psi)
              = C0 (s + G s^(a-1)) sum_k (-1)^k psi^(-k-1) (G s^a + s^2)^k.
    """
    k = _Consts(h)
    a = 2 - 2 * k.h
    big_g = p.zeta * k.g / p.m
    psi = p.psi
    c0 = p.kbt / (p.m * psi)
    betas, coefs = [], []
    k_max = int(math.ceil((beta_max + 1) / a))
    for kk in range(k_max + 1):
        for l in range(min(kk, int(beta_max // 2)) + 1):
            i = kk - l
            lead = a * i + 2 * l
            if lead + a - 1 > beta_max:
                continue
            # log-magnitude keeps large k finite
            logb = (special.gammaln(kk + 1) - special.gammaln(l + 1) - special.gammaln(i + 1)
                    + i * math.log(big_g) - (kk + 1) * math.log(psi))
            base = (-1) ** kk * math.exp(logb) * c0
            betas += [lead + a - 1, lead + 1]
            coefs += [base * big_g, base]
    betas = np.asarray(betas)
    coefs = np.asarray(coefs)
    keep = np.abs(betas - np.round(betas)) > 1e-9
    key = np.round(betas[keep], 9)
    uniq, inv = np.unique(key, return_inverse=True)
    total = np.zeros(uniq.size)
    np.add.at(total, inv, coefs[keep])
    return uniq, total


def harmonic_covariances_asymptotic(p: PhysicalParams, h: float, t) -> dict:
    """Large-lag expansion of the harmonic covariances.

    Each term c s^b of the small-s expansion of the Laplace-domain
    position covariance maps to c t^(-b-1) / Gamma(-b); the cross and
    velocity terms follow by differentiation (E[x(0)v(t)] = xx'(t),
    vv = -xx''). The divergent series is truncated at its smallest term.
    Keys match :func:`harmonic_covariances` (``xv`` is the printed sine
    transform, the negative of xx').
    """
    p.require_potential()
    t = np.abs(np.atleast_1d(np.asarray(t, dtype=float)))
    if np.any(t == 0):
        raise SingularityError("asymptotic expansion is singular at t = 0")
    b, c = _harmonic_series(p, h)
    w = c * special.rgamma(-b)
    lt = np.log(t)[:, None]
    mag = np.log(np.abs(w) + 1e-300)[None, :] - (b[None, :] + 1) * lt
    # truncate where the (nonzero) terms stop decreasing
    mag = np.where(w[None, :] != 0, mag, -np.inf)
    stop = np.array([_smallest_term(row) for row in mag])
    mask = np.arange(b.size)[None, :] <= stop[:, None]
    powv = np.exp(-(b[None, :] + 1) * lt)
    xx = np.sum(np.where(mask, w * powv, 0.0), axis=1)
    d1 = np.sum(np.where(mask, w * -(b + 1) * powv / t[:, None], 0.0), axis=1)
    d2 = np.sum(np.where(mask, w * (b + 1) * (b + 2) * powv / t[:, None] ** 2, 0.0), axis=1)
    return {"xx": xx, "xv": -d1, "vx": -d1, "vv": -d2}


def harmonic_asymptotic_lag(p: PhysicalParams, h: float, tol: float = DEFAULT_TOL, t_max: float = math.inf) -> float:
    """Smallest lag on a doubling ladder from which the asymptotic series
    matches the quadrature to ``tol`` (relative to the lag-0 variances) at
    that lag and at 1.5 times it. Returns ``inf`` when no rung up to
    ``t_max`` qualifies.

    The neglected part decays exponentially at a rate set by the complex
    poles of the Laplace-domain covariance, which can be slow for a weakly
    damped oscillator; hence the empirical check.
    """
    p.require_potential()
    k = _Consts(h)
    sx, sv = p.kbt / (p.m * p.psi), p.kbt / p.m
    scale = {"xx": sx, "xv": math.sqrt(sx * sv), "vv": sv}
    t = 4.0 * max(1.0 / math.sqrt(p.psi), 1.0 / _velocity_knee(p, k))
    for _ in range(40):
        if t > t_max:
            break
        ok = True
        for u in (t, 1.5 * t):
            q = harmonic_covariances(p, h, u, tol * 1e-2)
            a = harmonic_covariances_asymptotic(p, h, u)
            if any(abs(q[key] - a[key][0]) > tol * scale[key] for key in scale):
                ok = False
                break
        if ok:
            return t
        t *= 2
    return math.inf


def _smallest_term(mag: np.ndarray) -> int:
    """Index of the last term before the log-magnitudes start to grow."""
    finite = np.nonzero(np.isfinite(mag))[0]
    if finite.size == 0:
        return -1
    best = finite[0]
    for j in finite[1:]:
        if mag[j] > mag[best]:
            break
        best = j
    return int(best)


def _harmonic_points(p: PhysicalParams, k: _Consts) -> list[float]:
    # resonance of the undamped oscillator and the memory/inertia balance
    return sorted({math.sqrt(p.psi), (p.zeta * k.g / p.m) ** (1.0 / (2 * k.h))})


# ---------------------------------------------------------------------------
# Overdamped harmonic model
# ---------------------------------------------------------------------------

def tau(p: PhysicalParams, h: float) -> float:
    """(zeta Gamma(2h+1) / (m psi))^(1/(2-2h)), the Mittag-Leffler time."""
    h = check_hurst(h)
    psi = p.require_potential()
    return (p.zeta * special.gamma(2 * h + 1) / (p.m * psi)) ** (1.0 / (2 - 2 * h))


def overdamped_autocovariance(p: PhysicalParams, h: float, t):
    """sigma_x(t) = kbt/(m psi) E_{2-2h}(-(|t|/tau)^(2-2h))."""
    h = check_hurst(h)
    t = np.abs(np.asarray(t, dtype=float))
    alpha = 2 - 2 * h
    return _out(p.var_x * mittag_leffler(alpha, -((t / tau(p, h)) ** alpha)))


def overdamped_spectral_density(p: PhysicalParams, h: float, omega):
    """Closed-form spectrum of the overdamped displacement, w > 0:

        kbt/(m psi) * 2 sin(h pi) (tau w)^(2-2h) / w
                    / (1 - 2 cos(h pi)(tau w)^(2-2h) + (tau w)^(4-4h)).
    """
    h = check_hurst(h)
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ParameterError("overdamped spectral density needs omega > 0")
    a = (tau(p, h) * w) ** (2 - 2 * h)
    s, c = math.sin(h * math.pi), math.cos(h * math.pi)
    # denominator as a completed square: (a - c)^2 + s^2 >= s^2
    return _out(p.var_x * 2 * s * a / w / ((a - c) ** 2 + s * s))


def overdamped_spectral_transform(p: PhysicalParams, h: float, omega: float, tol: float = 1e-9) -> float:
    """2 int_0^inf cos(t w) sigma_x(t) dt by numerical quadrature; an
    independent route to :func:`overdamped_spectral_density`."""
    h = check_hurst(h)
    w = float(omega)
    if w <= 0:
        raise ParameterError("omega must be positive")
    cov = lambda t: overdamped_autocovariance(p, h, t)
    val = oscillatory_quadrature(cov, w, tol, origin_exponent=0.0, scale=p.var_x / w)
    return 2.0 * val


# ---------------------------------------------------------------------------
# Tabulation
# ---------------------------------------------------------------------------

def covariance_curve(p: PhysicalParams, h: float, kind: str, lags, tol: float = DEFAULT_TOL) -> CovarianceCurve:
    """Tabulate a covariance kind on ``lags``.

    ``kind`` is one of 'velocity' (free particle), 'overdamped',
    'harmonic-xx', 'harmonic-vv', 'harmonic-xv' or 'msd'.
    """
    lags = np.asarray(lags, dtype=float)
    meta = {"h": h, "m": p.m, "zeta": p.zeta, "kbt": p.kbt, "psi": p.psi, "curve": kind}
    if kind == "velocity":
        vals = [velocity_autocovariance(p, h, t, tol) for t in lags]
        ck = "velocity"
    elif kind == "overdamped":
        vals = overdamped_autocovariance(p, h, lags)
        ck = "displacement"
    elif kind in ("harmonic-xx", "harmonic-vv", "harmonic-xv"):
        key = kind.split("-")[1]
        vals = [harmonic_covariances(p, h, t, tol)[key] for t in lags]
        ck = {"xx": "displacement", "vv": "velocity", "xv": "cross"}[key]
    elif kind == "msd":
        vals = [msd_free(p, h, t, tol) for t in lags]
        ck = "msd"
    else:
        raise ParameterError(f"unknown covariance kind {kind!r}")
    return CovarianceCurve(lags, np.asarray(vals, dtype=float), ck, meta=meta)


def spectral_curve(p: PhysicalParams, h: float, kind: str, omegas) -> SpectralCurve:
    """Tabulate 'velocity' or 'overdamped' spectral densities."""
    omegas = np.asarray(omegas, dtype=float)
    if kind == "velocity":
        vals = velocity_spectral_density(p, h, omegas)
    elif kind == "overdamped":
        vals = overdamped_spectral_density(p, h, omegas)
    else:
        raise ParameterError(f"unknown spectrum kind {kind!r}")
    meta = {"h": h, "m": p.m, "zeta": p.zeta, "kbt": p.kbt, "psi": p.psi, "curve": kind}
    return SpectralCurve(omegas, np.atleast_1d(vals), meta)
