"""Special functions and transforms behind the closed-form results.

Contents
--------
* :func:`mittag_leffler` -- E_alpha(z) for 0 < alpha <= 1 and real z <= 0.
* :func:`kernel_fourier_full`, :func:`kernel_fourier_half`,
  :func:`kernel_laplace` -- transforms of the fGn memory kernel
  K_H(t) = 2H(2H-1)|t|^(2H-2).
* :func:`oscillatory_quadrature` -- cosine/sine transforms on (0, inf)
  of peaked, heavy-tailed integrands.

Fourier convention: f~(w) = int exp(i t w) f(t) dt, inverse
(1/2pi) int exp(-i t w) f~(w) dw.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, ParameterError, SingularityError
from .params import check_hurst

SERIES_RADIUS = 1.0
_ASYMPTOTIC_TERMS = 80
_GL_ORDER = 20


# ---------------------------------------------------------------------------
# Mittag-Leffler function
# ---------------------------------------------------------------------------

def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"Mittag-Leffler alpha must lie in (0, 1], got {alpha!r}")
    return alpha


def _ml_series(alpha: float, x: np.ndarray) -> np.ndarray:
    """Taylor series sum_k (-x)^k / Gamma(alpha k + 1), for x <= 1."""
    out = np.zeros_like(x)
    power = np.ones_like(x)
    for k in range(400):
        term = power * special.rgamma(alpha * k + 1.0)
        out += term
        if k > 2 and np.all(np.abs(term) <= 1e-18 * np.abs(out)):
            break
        power = power * (-x)
    return out


def _ml_asymptotic(alpha: float, x: np.ndarray) -> np.ndarray:
    """Algebraic expansion sum_k (-1)^(k+1) x^(-k) / Gamma(1 - alpha k).

    Truncated at the smallest term of the envelope Gamma(alpha k) x^-k / pi,
    which bounds every coefficient magnitude.
    """
    k = np.arange(1, _ASYMPTOTIC_TERMS + 1, dtype=float)
    logx = np.log(x)[:, None]
    log_env = special.gammaln(alpha * k)[None, :] - k[None, :] * logx
    stop = np.argmin(log_env, axis=1)
    coeff = (-1.0) ** (k + 1) * special.rgamma(1.0 - alpha * k)
    terms = coeff[None, :] * np.exp(-k[None, :] * logx)
    mask = np.arange(k.size)[None, :] < np.maximum(stop, 1)[:, None]
    return np.sum(np.where(mask, terms, 0.0), axis=1)


@lru_cache(maxsize=64)
def _ml_nodes(alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes for the spectral representation

        E_alpha(-x) = sin(alpha pi)/(alpha pi) *
                      int_0^inf exp(-(x u)^(1/alpha)) / (u^2 + 2u cos(alpha pi) + 1) du,

    a collapsed Hankel contour valid for 0 < alpha < 1. The rational factor
    depends on alpha only, so nodes and weights are built once per alpha on
    panels graded geometrically towards u = 0 and towards the Lorentzian
    peak at u = -cos(alpha pi); [U, inf) is mapped onto (0, 1] by u = U/v.
    The integrand is positive, so the result carries relative accuracy.
    """
    c, s = math.cos(alpha * math.pi), math.sin(alpha * math.pi)
    peak = -c
    upper = max(4.0, 2.0 * peak + 4.0 * s)
    breaks = {0.0, upper}
    ratio = min(2.0, 1.0 + 2.0 * alpha)
    breaks.update(1e-16 * ratio ** np.arange(int(40 / math.log(ratio))))
    if peak > 0:
        breaks.add(peak)
        for j in range(100):
            d = s * 2.0 ** (j - 2)
            breaks.update((peak - d, peak + d))
    b = np.array(sorted(v for v in breaks if 0.0 <= v <= upper))
    gx, gw = np.polynomial.legendre.leggauss(_GL_ORDER)

    def panels(edges):
        lo, hi = edges[:-1, None], edges[1:, None]
        return ((hi - lo) * (gx + 1) / 2 + lo).ravel(), ((hi - lo) * gw / 2).ravel()

    u, w = panels(b)
    v, vw = panels(np.concatenate([[0.0], 2.0 ** -np.arange(50, -1, -1.0)]))
    u = np.concatenate([u, upper / v])
    w = np.concatenate([w, vw * upper / v**2])
    rational = w / ((u + c) ** 2 + s * s) * s / (alpha * math.pi)
    with np.errstate(over="ignore"):
        powered = u ** (1.0 / alpha)
    return powered, rational


def _ml_integral(alpha: float, x: np.ndarray) -> np.ndarray:
    powered, rational = _ml_nodes(alpha)
    y = x ** (1.0 / alpha)
    out = np.empty_like(x)
    chunk = max(1, 2_000_000 // powered.size)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(0, x.size, chunk):
            arg = np.outer(y[i:i + chunk], powered)
            out[i:i + chunk] = np.exp(-np.nan_to_num(arg, nan=np.inf)) @ rational
    return out


@lru_cache(maxsize=64)
def asymptotic_radius(alpha: float) -> float:
    """Smallest x beyond which the algebraic expansion of E_alpha(-x) agrees
    with the quadrature representation to 1e-13 relative (tuned on a
    geometric grid up to 1e6)."""
    alpha = _check_alpha(alpha)
    if alpha == 1.0:
        return math.inf
    grid = 2.0 ** np.arange(0, 80) / 4.0
    grid = grid[(grid >= SERIES_RADIUS) & (grid <= 1e6)]
    exact = _ml_integral(alpha, grid)
    approx = _ml_asymptotic(alpha, grid)
    bad = np.nonzero(np.abs(approx / exact - 1.0) > 1e-13)[0]
    if bad.size == 0:
        return float(grid[0])
    if bad[-1] + 1 >= grid.size:
        return math.inf
    return float(grid[bad[-1] + 1])


def mittag_leffler(alpha: float, z, method: str | None = None):
    """One-parameter Mittag-Leffler function E_alpha(z) for real z <= 0.

    Parameters
    ----------
    alpha : float
        Order in (0, 1].
    z : float or array_like
        Nonpositive argument(s).
    method : {None, 'series', 'integral', 'asymptotic'}
        Force a single evaluation regime (used to check the crossovers).
        By default the Taylor series is used for |z| <= 1, the algebraic
        asymptotic expansion for |z| >= :func:`asymptotic_radius`, and the
        contour-integral representation in between.

    Returns
    -------
    float or ndarray
        Values in (0, 1], decreasing in |z|.
    """
    alpha = _check_alpha(alpha)
    zarr = np.asarray(z, dtype=float)
    if np.any(zarr > 0) or not np.all(np.isfinite(zarr)):
        raise ParameterError("Mittag-Leffler argument must be finite and <= 0")
    x = -zarr.ravel()
    if alpha == 1.0 or 1.0 - alpha < 1e-13:
        out = np.exp(-x)
    else:
        out = np.ones_like(x)
        if method is None:
            big = asymptotic_radius(alpha)
            sel_s = (x > 0) & (x <= SERIES_RADIUS)
            sel_a = x >= big
            sel_i = (x > SERIES_RADIUS) & ~sel_a
        else:
            if method not in ("series", "integral", "asymptotic"):
                raise ParameterError(f"unknown Mittag-Leffler method {method!r}")
            sel_s, sel_i, sel_a = ((x > 0) & (method == m) for m in ("series", "integral", "asymptotic"))
        if sel_s.any():
            out[sel_s] = _ml_series(alpha, x[sel_s])
        if sel_i.any():
            out[sel_i] = _ml_integral(alpha, x[sel_i])
        if sel_a.any():
            out[sel_a] = _ml_asymptotic(alpha, x[sel_a])
    out = out.reshape(zarr.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Transforms of the fGn memory kernel
# ---------------------------------------------------------------------------

def _nonzero(name: str, w):
    w = np.asarray(w, dtype=float)
    if np.any(w == 0):
        raise SingularityError(f"{name} diverges at omega = 0")
    return w


def _out(x):
    return x.item() if np.ndim(x) == 0 else x


def kernel_fourier_full(h: float, omega):
    """Full-line transform 2 Gamma(2h+1) sin(h pi) |omega|^(1-2h)."""
    h = check_hurst(h)
    w = _nonzero("kernel_fourier_full", omega)
    return _out(2.0 * special.gamma(2 * h + 1) * math.sin(h * math.pi) * np.abs(w) ** (1 - 2 * h))


def kernel_fourier_half(h: float, omega):
    """Half-line transform int_0^inf exp(i t w) K_H(t) dt.

    Equals Gamma(2h+1)|w|^(1-2h) [sin(h pi) - i cos(h pi) sign(w)]; the real
    part is half of :func:`kernel_fourier_full`, and K+(-w) = conj(K+(w)).
    """
    h = check_hurst(h)
    w = _nonzero("kernel_fourier_half", omega)
    mag = special.gamma(2 * h + 1) * np.abs(w) ** (1 - 2 * h)
    return _out(mag * (math.sin(h * math.pi) - 1j * math.cos(h * math.pi) * np.sign(w)))


def kernel_laplace(h: float, s):
    """Laplace transform of the kernel, Gamma(2h+1) s^(1-2h), s > 0."""
    h = check_hurst(h)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ParameterError("kernel_laplace needs s > 0")
    return _out(special.gamma(2 * h + 1) * s ** (1 - 2 * h))


# ---------------------------------------------------------------------------
# Oscillatory quadrature
# ---------------------------------------------------------------------------

def _quad(f, a, b, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, **kw)[:2]
    return val, err


def oscillatory_quadrature(
    f: Callable[[float], float],
    t: float = 0.0,
    tol: float = 1e-8,
    *,
    kind: str = "cos",
    origin_exponent: float | None = None,
    tail_exponent: float | None = None,
    points: Sequence[float] = (),
    scale: float = 0.0,
) -> float:
    """Integrate f(w) cos(t w) (or sin) over (0, inf).

    The domain is split at w* = max(1, 1/t). On [0, min(w*, 1/t)] no full
    oscillation occurs and plain adaptive quadrature is used, after the
    substitution u = w^(p+1) when the integrand behaves like w^p at the
    origin (``origin_exponent=p``). The remainder of [0, w*] uses a
    Fourier-weighted rule, and [w*, inf) the QAWF cycle extrapolation. For
    t = 0 the head is integrated out to a large cutoff and the rest is
    extrapolated from the power-law decay f ~ w^(-q) (``tail_exponent=q``).

    Parameters
    ----------
    f : callable
        Integrand, absolutely integrable on (0, inf).
    t : float
        Transform variable, t >= 0.
    tol : float
        Target relative error. Convergence is judged against
        ``max(|result|, scale)`` so callers whose result may cancel to
        nearly zero can supply a natural magnitude.
    points : sequence of float
        Extra breakpoints (peaks of f) inside the domain.

    Raises
    ------
    AccuracyError
        When the combined error estimate exceeds the target.
    """
    t = float(t)
    if t < 0 or not math.isfinite(t):
        raise ParameterError("oscillatory_quadrature needs finite t >= 0")
    if tol <= 0:
        raise ParameterError("tol must be positive")
    if kind not in ("cos", "sin"):
        raise ParameterError("kind must be 'cos' or 'sin'")
    trig = math.cos if kind == "cos" else math.sin
    eps = max(min(tol * 1e-2, 1e-10), 1e-13)
    split = max(1.0, 1.0 / t) if t > 0 else 1.0
    knee = min(split, 1.0 / t) if t > 0 else split
    inner = sorted(p for p in points if 0 < p)

    total = 0.0
    errsum = 0.0

    def add(val_err):
        nonlocal total, errsum
        total += val_err[0]
        errsum += val_err[1]

    def plain(a, b):
        pts = [p for p in inner if a < p < b]
        if origin_exponent is not None and a == 0.0:
            e = origin_exponent + 1.0
            g = lambda u: f(u ** (1.0 / e)) * trig(t * u ** (1.0 / e)) * u ** (1.0 / e - 1.0) / e
            pts = [p**e for p in pts]
            a, b = 0.0, b**e
        else:
            g = lambda w: f(w) * trig(t * w)
        return _quad(g, a, b, points=pts or None, limit=500, epsabs=0.0, epsrel=eps)

    def weighted(a, b):
        edges = [a] + [p for p in inner if a < p < b] + [b]
        val = err = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            v, e = _quad(f, lo, hi, weight=kind, wvar=t, limit=500, epsabs=0.0, epsrel=eps)
            val += v
            err += e
        return val, err

    add(plain(0.0, knee))
    if t > 0:
        if split > knee:
            add(weighted(knee, split))
        # QAWF on the infinite range; breakpoints beyond w* handled first.
        far = [p for p in inner if p > split]
        start = split
        if far:
            stop = max(far) * 2.0
            add(weighted(split, stop))
            start = stop
        # QAWF takes an absolute tolerance only; size it from what is known
        add(_quad(f, start, math.inf, weight=kind, wvar=t, limlst=200, limit=500,
                  epsabs=max(eps * max(abs(total), scale), 1e-300)))
    else:
        cutoff = split * 1e6
        mid = [p for p in inner if split < p < cutoff]
        edges = [split] + mid + [cutoff]
        for lo, hi in zip(edges[:-1], edges[1:]):
            n_dec = max(1, int(math.log10(hi / lo)))
            sub = np.geomspace(lo, hi, n_dec + 1)
            for a, b in zip(sub[:-1], sub[1:]):
                add(_quad(f, a, b, limit=500, epsabs=0.0, epsrel=eps))
        if tail_exponent is not None:
            if tail_exponent <= 1:
                raise ParameterError("tail exponent must exceed 1 for integrability")
            add((f(cutoff) * cutoff / (tail_exponent - 1.0), 0.0))
        else:
            add(_quad(f, cutoff, math.inf, limit=500, epsabs=0.0, epsrel=eps))

    ref = max(abs(total), scale)
    if not math.isfinite(total) or errsum > tol * ref:
        raise AccuracyError("oscillatory quadrature did not converge", errsum / max(ref, 1e-300))
    return total
