import math

import numpy as np
import pytest
from scipy import linalg

from subdiffusion import heatbath as HB
from subdiffusion.errors import InputError, ParameterError, StepTooLargeError
from subdiffusion.fgn import kernel_K


@pytest.fixture(scope="module")
def bath():
    return HB.build_bath(0.75, 5000)


def test_single_oscillator_kernel_is_cosine():
    cfg = HB.build_bath(0.75, 1, 0.5, 2.0)
    assert cfg.omegas[0] == pytest.approx(1.0)
    t = np.linspace(0, 20, 101)
    j = HB.bath_kernel(cfg, t)
    assert np.allclose(j, j[0] * np.cos(t), atol=1e-14 * abs(j[0]))


def test_kernel_zero_lag_and_parity(bath):
    closed = bath.m_b * np.sum(bath.gammas**2 / bath.omegas**2)
    assert HB.bath_kernel(bath, 0.0) == pytest.approx(closed, rel=1e-14)
    assert closed > 0
    t = np.array([0.3, 1.7, 12.0])
    assert np.array_equal(HB.bath_kernel(bath, t), HB.bath_kernel(bath, -t))


def test_kernel_tracks_power_law(bath):
    t = np.geomspace(0.1, 10, 41)
    t0 = bath.t_ref
    ratio = HB.bath_kernel(bath, t) / HB.bath_kernel(bath, t0)
    assert np.max(np.abs(ratio / (t / t0) ** -0.5 - 1)) < 0.10
    # calibration pins the absolute level at the reference lag
    assert HB.bath_kernel(bath, t0) == pytest.approx(kernel_K(0.75, t0), rel=1e-12)


def test_valid_window_reported(bath):
    lo, hi = HB.valid_kernel_window(bath)
    horizon = 2 * math.pi * 5000 / (1e2 - 1e-2)
    assert lo <= 0.1 and hi >= 10
    assert hi <= horizon


def test_build_is_deterministic():
    a, b = HB.build_bath(0.7, 300, seed=1), HB.build_bath(0.7, 300, seed=2)
    assert np.array_equal(a.omegas, b.omegas) and np.array_equal(a.gammas, b.gammas)
    lg = HB.build_bath(0.7, 50, spacing="log")
    assert lg.omegas[0] == pytest.approx(1e-2) and lg.omegas[-1] == pytest.approx(1e2)


@pytest.mark.parametrize("kw", [dict(h=0.5), dict(n=0), dict(omega_min=2.0, omega_max=1.0),
                                dict(m_b=0.0), dict(spacing="random")])
def test_build_rejects_bad_input(kw):
    args = dict(h=0.75, n=10)
    args.update(kw)
    with pytest.raises(ParameterError):
        HB.build_bath(**args)


def test_config_validation():
    with pytest.raises(InputError):
        HB.HeatBathConfig(np.ones(3), np.ones(2))
    with pytest.raises(ParameterError):
        HB.HeatBathConfig(np.array([1.0, -1.0]), np.ones(2))


def test_initial_condition_moments():
    cfg = HB.build_bath(0.75, 4, 0.5, 4.0, m_b=2.0, kbt=1.5)
    n, x0 = 20000, 0.7
    s = HB.sample_initial_conditions(cfg, x0, seed=3, n_members=n)
    assert np.all(s.x == x0) and np.all(s.p == 0)
    y = s.q - cfg.gammas * x0 / cfg.omegas**2
    sd_y = np.sqrt(cfg.kbt / cfg.m_b) / cfg.omegas
    assert np.all(np.abs(y.mean(axis=0)) < 4 * sd_y / math.sqrt(n))
    var_p = s.p_b.var(axis=0, ddof=1)
    target = cfg.m_b * cfg.kbt
    assert np.all(np.abs(var_p - target) < 3 * target * math.sqrt(2 / n))
    cross = (s.p_b[:, :, None] * y[:, None, :]).mean(axis=0)
    se = math.sqrt(target) * sd_y[None, :] / math.sqrt(n)
    assert np.all(np.abs(cross) < 4 * se)


def test_initial_conditions_single_and_deterministic():
    cfg = HB.build_bath(0.75, 10)
    a = HB.sample_initial_conditions(cfg, 0.0, seed=5)
    b = HB.sample_initial_conditions(cfg, 0.0, seed=5)
    ens = HB.sample_initial_conditions(cfg, 0.0, seed=5, n_members=3)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.p_b, b.p_b)
    assert np.array_equal(ens.q[0], a.q)
    assert a.q.shape == (10,) and ens.q.shape == (3, 10)


def test_empty_bath_energy_conservation():
    cfg = HB.HeatBathConfig(np.empty(0), np.empty(0))
    state = HB.SystemState(1.0, 0.0, np.empty(0), np.empty(0))
    periods = 10_000
    t_max = 2 * math.pi * periods
    _, snaps = HB.integrate(cfg, state, m=1.0, psi=1.0, t_max=t_max, step=1e-3, stride=20_000, snapshots=True)
    e = np.array([HB.energy(cfg, s, 1.0, 1.0) for s in snaps])
    assert np.max(np.abs(e / e[0] - 1)) < 1e-6


def test_single_oscillator_normal_modes():
    cfg = HB.build_bath(0.75, 1, 0.25, 4.0)
    m, psi = 1.3, 0.6
    state = HB.SystemState(0.4, -0.2, np.array([0.3]), np.array([0.5]))
    dt_out, t_max = 0.05, 20.0
    tr = HB.integrate(cfg, state, m=m, psi=psi, t_max=t_max, step=1e-3, stride=50)
    # exact solution from the eigen-decomposition of the 2x2 stiffness problem
    w, g, mb = cfg.omegas[0], cfg.gammas[0], cfg.m_b
    stiff = np.array([[m * psi + mb * g**2 / w**2, -mb * g], [-mb * g, mb * w**2]])
    mass = np.array([m, mb])
    msq = np.diag(1 / np.sqrt(mass))
    lam, vec = linalg.eigh(msq @ stiff @ msq)
    om = np.sqrt(lam)
    y0 = vec.T @ (np.sqrt(mass) * np.array([0.4, 0.3]))
    dy0 = vec.T @ (np.array([-0.2, 0.5]) / np.sqrt(mass))
    t = tr.times
    modes = np.cos(np.outer(t, om)) * y0 + np.sin(np.outer(t, om)) * dy0 / om
    x_exact = (modes @ vec.T)[:, 0] / math.sqrt(m)
    assert tr.dt == pytest.approx(dt_out)
    assert np.max(np.abs(tr.values - x_exact)) < 1e-4


def test_energy_drift_at_prescribed_step():
    cfg = HB.build_bath(0.75, 2000)
    state = HB.sample_initial_conditions(cfg, 0.0, seed=1)
    _, snaps = HB.integrate(cfg, state, m=0.01, t_max=20.0, step=0.1 / cfg.omega_max, stride=100, snapshots=True)
    e = np.array([HB.energy(cfg, s, 0.01) for s in snaps])
    assert np.max(np.abs(e / e[0] - 1)) <= 1e-4


def test_ensemble_matches_single_runs():
    cfg = HB.build_bath(0.75, 40)
    ens = HB.sample_initial_conditions(cfg, 0.0, seed=2, n_members=3)
    out = HB.integrate(cfg, ens, m=0.1, t_max=1.0, step=1e-3, stride=10)
    one = HB.sample_initial_conditions(cfg, 0.0, seed=2, path_index=1)
    tr = HB.integrate(cfg, one, m=0.1, t_max=1.0, step=1e-3, stride=10)
    assert out.shape == (3, 101)
    assert np.allclose(out[1], tr.values, rtol=0, atol=1e-12)


def test_small_and_large_integrators_agree():
    # dense propagator (small systems) versus explicit stepping (large systems)
    cfg = HB.build_bath(0.75, 40)
    state = HB.sample_initial_conditions(cfg, 0.1, seed=4)
    ref = HB.integrate(cfg, state, m=0.1, t_max=2.0, step=1e-3, stride=25)
    old = HB.PROPAGATOR_MAX_DIM
    try:
        HB.PROPAGATOR_MAX_DIM = 0
        loop = HB.integrate(cfg, state, m=0.1, t_max=2.0, step=1e-3, stride=25)
    finally:
        HB.PROPAGATOR_MAX_DIM = old
    assert np.allclose(ref.values, loop.values, rtol=0, atol=1e-9)


def test_step_too_large():
    cfg = HB.build_bath(0.75, 10)
    state = HB.sample_initial_conditions(cfg, 0.0, seed=0)
    with pytest.raises(StepTooLargeError):
        HB.integrate(cfg, state, m=1.0, t_max=1.0, step=0.0011)
    with pytest.raises(ParameterError):
        HB.integrate(cfg, state, m=1.0, t_max=1.0, step=1e-3, psi=-1.0)


def test_fluctuation_dissipation(bath):
    rep = HB.verify_fluctuation_dissipation(bath, n_members=2000, seed=7)
    lag0 = rep.lags == 0
    assert np.all(np.abs(rep.zscore[lag0]) < 3)
    # Gaussian data: a 4-sigma band over 20 comparisons
    assert rep.max_abs_z < 4
    assert np.all(np.abs(rep.mean_g) < 4 * rep.mean_g_stderr)
    lo, hi = rep.valid_window
    assert lo <= 0.1 and hi >= 10


def test_fd_stationarity(bath):
    lags = np.array([0.5, 2.0, 5.0])
    rep = HB.verify_fluctuation_dissipation(bath, n_members=2000, seed=8, lags=lags, offsets=(0.0, 3.0))
    first, second = rep.empirical[:3], rep.empirical[3:]
    se = np.hypot(rep.stderr[:3], rep.stderr[3:])
    assert np.all(np.abs(first - second) < 4 * se)
    assert np.array_equal(rep.theoretical[:3], rep.theoretical[3:])


def test_fd_needs_enough_members(bath):
    with pytest.raises(InputError):
        HB.verify_fluctuation_dissipation(bath, n_members=50)


def test_kernel_scale_matches_cosine_transform():
    # cosine transform of w^(1-2h): Gamma(2-2h) sin(pi h) ... inverted gives K_H
    h, t = 0.75, 1.3
    a = 2 - 2 * h
    cos_tr = math.gamma(a) * math.cos(math.pi * a / 2) * t ** (-a)
    assert HB.kernel_scale(h) * cos_tr == pytest.approx(kernel_K(h, t), rel=1e-12)
