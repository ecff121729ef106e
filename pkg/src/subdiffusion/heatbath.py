"""Microscopic heat bath: a particle bilinearly coupled to N harmonic
oscillators whose elimination yields the memory equation.

Hamiltonian (bath mass m_b, particle mass m, potential 0.5 m psi x^2)::

    H = p^2/(2m) + 0.5 m psi x^2
        + sum_j p_j^2/(2 m_b) + 0.5 m_b w_j^2 (q_j - g_j x / w_j^2)^2

The memory kernel is J(t) = m_b sum_j g_j^2/w_j^2 cos(w_j t) and the
noise G(t) built from the Gibbs-distributed bath initial data satisfies
E[G(t) G(s)] = kbt J(t - s) exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import InputError, ParameterError, StepTooLargeError
from .fgn import kernel_K
from .gaussian import rng_for
from .params import check_hurst
from .trace import Trace

STEP_FACTOR = 0.1
DEFAULT_BAND = (1e-2, 1e2)
PROPAGATOR_MAX_DIM = 64
DEFAULT_TAPER = 0.2


@dataclass(frozen=True)
class HeatBathConfig:
    """Bath frequencies ``omegas``, couplings ``gammas`` and masses.

    ``zeta`` is the friction the kernel was calibrated to, ``c`` the fitted
    constant in gamma^2 = c w^(3-2h) weight(w), and ``t_ref`` the
    calibration lag.
    """

    omegas: np.ndarray
    gammas: np.ndarray
    m_b: float = 1.0
    kbt: float = 1.0
    h: float | None = None
    zeta: float = 1.0
    c: float = float("nan")
    t_ref: float = float("nan")
    band: tuple = field(default=DEFAULT_BAND)

    def __post_init__(self):
        w = np.array(self.omegas, dtype=float, copy=True).ravel()
        g = np.array(self.gammas, dtype=float, copy=True).ravel()
        if w.shape != g.shape:
            raise InputError("omegas and gammas differ in length")
        if np.any(w <= 0) or np.any(g < 0):
            raise ParameterError("bath frequencies must be positive and couplings nonnegative")
        if not (self.m_b > 0 and self.kbt > 0):
            raise ParameterError("m_b and kbt must be positive")
        w.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "gammas", g)

    @property
    def n_osc(self) -> int:
        return self.omegas.size

    @property
    def omega_max(self) -> float:
        return float(self.omegas.max()) if self.n_osc else 0.0

    @property
    def kernel_weights(self) -> np.ndarray:
        """m_b g_j^2 / w_j^2, the cosine amplitudes of J."""
        return self.m_b * self.gammas**2 / self.omegas**2

    def meta(self) -> dict:
        return {"n_osc": self.n_osc, "m_b": self.m_b, "kbt": self.kbt, "h": self.h,
                "zeta": self.zeta, "c": self.c, "t_ref": self.t_ref,
                "omega_min": self.band[0], "omega_max": self.band[1]}


@dataclass
class SystemState:
    """Phase-space point. Arrays carry a leading ensemble axis when the
    state describes several independent systems."""

    x: np.ndarray | float
    p: np.ndarray | float
    q: np.ndarray
    p_b: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p_b = np.asarray(self.p_b, dtype=float)
        if self.q.shape != self.p_b.shape:
            raise InputError("bath positions and momenta differ in shape")


def rolloff(u, start: float):
    """Smooth (infinitely differentiable) step: 1 for u <= start, 0 for u >= 1."""
    u = np.asarray(u, dtype=float)
    if start >= 1:
        return np.ones_like(u)
    x = np.clip((u - start) / (1 - start), 0.0, 1.0)
    bump = lambda y: np.where(y > 0, np.exp(-1.0 / np.maximum(y, 1e-300)), 0.0)
    return bump(1 - x) / (bump(1 - x) + bump(x))


def build_bath(h: float, n: int, omega_min: float = DEFAULT_BAND[0], omega_max: float = DEFAULT_BAND[1],
               m_b: float = 1.0, kbt: float = 1.0, seed: int | None = None, zeta: float = 1.0,
               t_ref: float | None = None, spacing: str = "linear",
               taper_start: float = DEFAULT_TAPER) -> HeatBathConfig:
    """Deterministic bath whose kernel approximates zeta K_H on the band.

    zeta K_H(t) = (2 zeta g s / pi) int_0^inf w^(1-2h) cos(w t) dw, so the
    amplitudes m_b g_j^2 / w_j^2 are set proportional to the exact integral
    of w^(1-2h) over the cell around w_j (the first cell reaches down to
    0, absorbing the band below omega_min). Equivalently
    g_j^2 = c w_j^(3-2h) weight_j with weight_j that cell integral divided
    by w_j^(1-2h). Above ``taper_start * omega_max`` the weights roll off
    smoothly to zero; a hard cut at omega_max would leave a ringing error
    decaying only like (omega_max t)^(-1/2). The constant c is fixed so
    that J(t_ref) = zeta K_H(t_ref), with t_ref the geometric mean of
    1/omega_max and 1/omega_min.

    ``spacing`` is "linear" (default; smallest maximal gap, so the longest
    recurrence-free window 2 pi N / (omega_max - omega_min)) or "log".
    ``seed`` is accepted for interface symmetry; the construction is not
    random.
    """
    h = check_hurst(h)
    n = int(n)
    if n < 1:
        raise ParameterError("the bath needs at least one oscillator")
    if not 0 < omega_min < omega_max:
        raise ParameterError("need 0 < omega_min < omega_max")
    if not (m_b > 0 and kbt > 0 and zeta > 0):
        raise ParameterError("m_b, kbt and zeta must be positive")
    if n == 1:
        w = np.array([math.sqrt(omega_min * omega_max)])
    elif spacing == "linear":
        w = np.linspace(omega_min, omega_max, n)
    elif spacing == "log":
        w = np.geomspace(omega_min, omega_max, n)
    else:
        raise ParameterError(f"unknown spacing {spacing!r}")
    a = 2 - 2 * h
    edges = np.concatenate([[0.0], 0.5 * (w[1:] + w[:-1]), [omega_max]])
    cell = (edges[1:] ** a - edges[:-1] ** a) / a
    if n > 1:
        cell = cell * rolloff(w / omega_max, taper_start)
    weight = cell / w ** (1 - 2 * h)
    shape = w ** (3 - 2 * h) * weight
    if t_ref is None:
        t_ref = 1.0 / math.sqrt(omega_min * omega_max)
    raw = m_b * np.sum(shape / w**2 * np.cos(w * t_ref))
    target = zeta * kernel_K(h, t_ref)
    if raw <= 0:
        raise ParameterError("calibration lag falls on a non-positive kernel value")
    c = target / raw
    return HeatBathConfig(w, np.sqrt(c * shape), m_b, kbt, h, zeta, c, t_ref, (omega_min, omega_max))


def bath_kernel(cfg: HeatBathConfig, t):
    """J(t) = m_b sum_j g_j^2/w_j^2 cos(w_j t)."""
    t = np.asarray(t, dtype=float)
    out = np.cos(np.multiply.outer(t, cfg.omegas)) @ cfg.kernel_weights
    return float(out) if out.ndim == 0 else out


def valid_kernel_window(cfg: HeatBathConfig, rel_tol: float = 0.1, grid=None) -> tuple[float, float]:
    """Largest lag interval around ``t_ref`` where J stays within
    ``rel_tol`` of zeta K_H, capped by the recurrence horizon
    2 pi N / (w_max - w_min)."""
    if cfg.h is None:
        raise ParameterError("configuration carries no Hurst exponent")
    lo_band, hi_band = cfg.band
    horizon = 2 * math.pi * cfg.n_osc / max(hi_band - lo_band, 1e-300)
    if grid is None:
        grid = np.geomspace(1e-2 / hi_band, min(10.0 / lo_band, horizon), 400)
    grid = np.asarray(grid, dtype=float)
    rel = np.abs(bath_kernel(cfg, grid) / (cfg.zeta * kernel_K(cfg.h, grid)) - 1.0)
    ok = rel <= rel_tol
    i0 = int(np.argmin(np.abs(np.log(grid / cfg.t_ref))))
    if not ok[i0]:
        return (float("nan"), float("nan"))
    a = i0
    while a > 0 and ok[a - 1]:
        a -= 1
    b = i0
    while b < grid.size - 1 and ok[b + 1]:
        b += 1
    return float(grid[a]), float(min(grid[b], horizon))


def sample_initial_conditions(cfg: HeatBathConfig, x0=0.0, seed: int = 0, n_members: int | None = None,
                              path_index: int = 0) -> SystemState:
    """Gibbs-distributed bath around a particle held at ``x0`` with p = 0.

    p_j ~ N(0, m_b kbt); q_j - g_j x0 / w_j^2 ~ N(0, kbt/(m_b w_j^2)), all
    independent. With ``n_members`` the state has a leading ensemble axis
    and member ``i`` uses substream ``path_index + i``.
    """
    w, g = cfg.omegas, cfg.gammas
    sd_p = math.sqrt(cfg.m_b * cfg.kbt)
    sd_q = np.sqrt(cfg.kbt / cfg.m_b) / w

    def one(k, x):
        rng = rng_for(seed, k)
        pb = sd_p * rng.standard_normal(w.size)
        q = g * x / w**2 + sd_q * rng.standard_normal(w.size)
        return q, pb

    if n_members is None:
        q, pb = one(path_index, float(x0))
        return SystemState(float(x0), 0.0, q, pb, 0.0)
    x0s = np.broadcast_to(np.asarray(x0, dtype=float), (int(n_members),)).copy()
    parts = [one(path_index + i, x0s[i]) for i in range(int(n_members))]
    q = np.stack([a for a, _ in parts]) if parts else np.empty((0, w.size))
    pb = np.stack([b for _, b in parts]) if parts else np.empty((0, w.size))
    return SystemState(x0s, np.zeros_like(x0s), q, pb, 0.0)


def energy(cfg: HeatBathConfig, state: SystemState, m: float, psi: float = 0.0):
    """Total Hamiltonian of a state (per member for ensembles)."""
    w, g, mb = cfg.omegas, cfg.gammas, cfg.m_b
    x = np.asarray(state.x, dtype=float)
    p = np.asarray(state.p, dtype=float)
    disp = state.q - np.multiply.outer(x, g / w**2)
    bath = np.sum(state.p_b**2, axis=-1) / (2 * mb) + 0.5 * mb * np.sum(w**2 * disp**2, axis=-1)
    return p**2 / (2 * m) + 0.5 * m * psi * x**2 + bath


def _forces(cfg, x, q, m, psi, coup, wsq, s_over):
    # disp_j = q_j - g_j x / w_j^2
    disp = q - np.multiply.outer(x, s_over)
    fx = -m * psi * x + cfg.m_b * disp @ coup
    fq = -cfg.m_b * wsq * disp
    return fx, fq


def _verlet_matrix(cfg: HeatBathConfig, m: float, psi: float, dt: float) -> np.ndarray:
    """One velocity-Verlet step as a linear map on (x, q, p, p_b)."""
    n = cfg.n_osc
    w, g, mb = cfg.omegas, cfg.gammas, cfg.m_b
    d = n + 1
    # force = -A @ (x, q)
    a = np.zeros((d, d))
    a[0, 0] = m * psi + mb * np.sum(g**2 / w**2)
    a[0, 1:] = -mb * g
    a[1:, 0] = -mb * g
    a[1:, 1:] = np.diag(mb * w**2)
    minv = np.diag(np.concatenate([[1.0 / m], np.full(n, 1.0 / mb)]))
    eye = np.eye(d)
    half = np.block([[eye, np.zeros((d, d))], [-0.5 * dt * a, eye]])
    drift = np.block([[eye, dt * minv], [np.zeros((d, d)), eye]])
    return half @ drift @ half


def integrate(cfg: HeatBathConfig, state0: SystemState, m: float, t_max: float, step: float,
              psi: float = 0.0, stride: int = 1, snapshots: bool = False):
    """Velocity-Verlet trajectory of particle plus bath.

    Parameters
    ----------
    cfg, state0
        Bath and initial state; ``state0`` may carry an ensemble axis.
    m, psi
        Particle mass and harmonic strength (``psi=0`` for a free particle).
    t_max, step
        Duration and integration step; ``step`` must not exceed
        0.1 / max(w_j).
    stride
        Record every ``stride``-th step.
    snapshots
        Also return a list of full states at the recorded times.

    Returns
    -------
    Trace (single system) or ndarray (ensemble, shape members x samples)
        Particle position sampled every ``stride * step``; plus the
        snapshot list when requested.
    """
    if not (m > 0 and step > 0 and t_max >= 0):
        raise ParameterError("m and step must be positive, t_max nonnegative")
    if psi < 0:
        raise ParameterError("psi must be nonnegative")
    if cfg.n_osc and step > STEP_FACTOR / cfg.omega_max * (1 + 1e-12):
        raise StepTooLargeError(f"step {step:g} exceeds {STEP_FACTOR}/omega_max = {STEP_FACTOR / cfg.omega_max:g}")
    stride = int(stride)
    if stride < 1:
        raise ParameterError("stride must be at least 1")
    n_steps = int(round(t_max / step))
    n_out = n_steps // stride + 1
    single = np.ndim(state0.x) == 0
    x = np.atleast_1d(np.asarray(state0.x, dtype=float)).copy()
    p = np.atleast_1d(np.asarray(state0.p, dtype=float)).copy()
    q = np.atleast_2d(state0.q).astype(float, copy=True)
    pb = np.atleast_2d(state0.p_b).astype(float, copy=True)
    out = np.empty((x.size, n_out))
    out[:, 0] = x
    snaps = [SystemState(_squeeze(x, single), _squeeze(p, single), _squeeze(q, single), _squeeze(pb, single), state0.t)] if snapshots else None

    dim = 2 * (cfg.n_osc + 1)
    if dim <= PROPAGATOR_MAX_DIM:
        big = np.linalg.matrix_power(_verlet_matrix(cfg, m, psi, step), stride)
        z = np.concatenate([x[:, None], q, p[:, None], pb], axis=1).T
        d = cfg.n_osc + 1
        for k in range(1, n_out):
            z = big @ z
            out[:, k] = z[0]
            if snapshots:
                snaps.append(_state_from(z, d, single, state0.t + k * stride * step))
    else:
        w, g, mb = cfg.omegas, cfg.gammas, cfg.m_b
        wsq = w**2
        s_over = g / wsq
        coup = g
        fx, fq = _forces(cfg, x, q, m, psi, coup, wsq, s_over)
        for k in range(1, n_out):
            for _ in range(stride):
                p += 0.5 * step * fx
                pb += 0.5 * step * fq
                x += step * p / m
                q += step * pb / mb
                fx, fq = _forces(cfg, x, q, m, psi, coup, wsq, s_over)
                p += 0.5 * step * fx
                pb += 0.5 * step * fq
            out[:, k] = x
            if snapshots:
                snaps.append(SystemState(_squeeze(x, single), _squeeze(p, single), _squeeze(q, single),
                                         _squeeze(pb, single), state0.t + k * stride * step))
    meta = {**cfg.meta(), "m": m, "psi": psi, "step": step, "stride": stride, "kind": "x"}
    result = Trace(stride * step, out[0], state0.t, meta) if single else out
    return (result, snaps) if snapshots else result


def _squeeze(a, single):
    a = np.array(a, copy=True)
    return a[0] if single else a


def _state_from(z, d, single, t):
    x, q, p, pb = z[0], z[1:d].T, z[d], z[d + 1:].T
    return SystemState(_squeeze(x, single), _squeeze(p, single), _squeeze(q, single), _squeeze(pb, single), t)


def bath_noise(cfg: HeatBathConfig, state0: SystemState, t) -> np.ndarray:
    """G(t) = sum_j m_b g_j (q_j(0) - g_j x(0)/w_j^2) cos(w_j t)
              + sum_j (g_j/w_j) p_j(0) sin(w_j t), per member."""
    w, g = cfg.omegas, cfg.gammas
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x0 = np.atleast_1d(np.asarray(state0.x, dtype=float))
    q = np.atleast_2d(state0.q)
    pb = np.atleast_2d(state0.p_b)
    y = q - np.multiply.outer(x0, g / w**2)
    arg = np.multiply.outer(w, t)
    return (cfg.m_b * g * y) @ np.cos(arg) + (g / w * pb) @ np.sin(arg)


@dataclass
class FDReport:
    """Empirical versus theoretical noise covariance on a lag grid.

    Each row compares Cov[G(s + lag), G(s)] with kbt J(lag); ``zscore`` is
    the deviation in units of the Gaussian standard error.
    """

    lags: np.ndarray
    offsets: np.ndarray
    empirical: np.ndarray
    theoretical: np.ndarray
    stderr: np.ndarray
    mean_g: np.ndarray
    mean_g_stderr: np.ndarray
    n_members: int
    valid_window: tuple

    @property
    def relerr(self) -> np.ndarray:
        return np.abs(self.empirical - self.theoretical) / np.abs(self.theoretical)

    @property
    def zscore(self) -> np.ndarray:
        return (self.empirical - self.theoretical) / self.stderr

    @property
    def max_relerr(self) -> float:
        return float(np.max(self.relerr))

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.zscore)))

    def columns(self) -> dict:
        return {"lag": self.lags, "offset": self.offsets, "empirical": self.empirical,
                "theoretical": self.theoretical, "relerr": self.relerr}


def verify_fluctuation_dissipation(cfg: HeatBathConfig, n_members: int = 1000, seed: int = 0, lags=None,
                                   offsets=(0.0, 1.0), x0: float = 0.0) -> FDReport:
    """Check E[G(t) G(s)] = kbt J(t - s) over an ensemble of Gibbs initial
    conditions, at every lag for each start ``s`` in ``offsets``."""
    if int(n_members) < 100:
        raise InputError("the fluctuation-dissipation check needs at least 100 members")
    if lags is None:
        lags = np.concatenate([[0.0], np.geomspace(0.1, 10.0, 9)])
    lags = np.asarray(lags, dtype=float)
    state = sample_initial_conditions(cfg, x0, seed, n_members=int(n_members))
    rows = []
    for s in offsets:
        g_s = bath_noise(cfg, state, [s])[:, 0]
        g_t = bath_noise(cfg, state, s + lags)
        prod = g_t * g_s[:, None]
        emp = prod.mean(axis=0)
        theo = cfg.kbt * bath_kernel(cfg, lags)
        j0 = cfg.kbt * bath_kernel(cfg, 0.0)
        se = np.sqrt((j0 * j0 + theo * theo) / n_members)
        rows.append((np.full(lags.size, s), emp, theo, se, g_t.mean(axis=0), g_t.std(axis=0, ddof=1) / math.sqrt(n_members)))
    cat = lambda i: np.concatenate([r[i] for r in rows])
    window = valid_kernel_window(cfg) if cfg.h is not None else (float("nan"), float("nan"))
    return FDReport(np.tile(lags, len(offsets)), cat(0), cat(1), cat(2), cat(3), cat(4), cat(5),
                    int(n_members), window)


def kernel_scale(h: float) -> float:
    """2 Gamma(2h+1) sin(h pi) / pi, the cosine-transform density of K_H
    per unit w^(1-2h)."""
    h = check_hurst(h)
    return 2 * special.gamma(2 * h + 1) * math.sin(h * math.pi) / math.pi
