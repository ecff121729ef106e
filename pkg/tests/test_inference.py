import math

import numpy as np
import pytest
from scipy import linalg

from subdiffusion import analytic as A
from subdiffusion import inference as I
from subdiffusion import simulate as S
from subdiffusion.errors import BandError, IllPosedError, InputError, SingularRecoveryError
from subdiffusion.lifetime import LifetimeParams, lifetime_map
from subdiffusion.params import PhysicalParams
from subdiffusion.specfun import mittag_leffler
from subdiffusion.trace import CovarianceCurve, LaplaceCurve, Trace

FIG = (0.74, 0.40, 0.81)


def fig_params(h=FIG[0], ratio=FIG[1], amp=FIG[2]):
    # m = psi = beta = 1, so zeta/(m psi) = ratio and beta^2 kbt/(m psi) = amp
    return PhysicalParams(m=1.0, zeta=ratio, kbt=amp, psi=1.0)


# --- empirical autocorrelation -------------------------------------------------

def test_autocorrelation_constant_trace():
    c = I.empirical_autocorrelation(Trace(0.1, np.full(50, 3.0)), 10)
    assert np.all(c.values == 0)
    assert c.lags[1] == pytest.approx(0.1)


def test_autocorrelation_matches_direct_sum():
    x = np.random.default_rng(0).standard_normal(300).cumsum()
    c = I.empirical_autocorrelation(Trace(1.0, x), 20)
    d = x - x.mean()
    direct = [np.dot(d[: x.size - k], d[k:]) / x.size for k in range(21)]
    assert np.allclose(c.values, direct, rtol=1e-10, atol=1e-10)
    assert c.values[0] == pytest.approx(np.var(x), rel=1e-12)


def test_autocorrelation_is_positive_semidefinite():
    x = np.sin(np.arange(400) * 0.3) + 0.1 * np.random.default_rng(1).standard_normal(400)
    c = I.empirical_autocorrelation(Trace(1.0, x), 399)
    assert np.linalg.eigvalsh(linalg.toeplitz(c.values)).min() >= -1e-10


def test_autocorrelation_lag_bound():
    with pytest.raises(InputError):
        I.empirical_autocorrelation(Trace(1.0, np.arange(10.0)), 10)


def test_autocorrelation_of_simulated_trace():
    p = fig_params()
    r = S.SimRequest(p, 0.74, "overdamped", 20000, 0.05, 3)
    c = I.empirical_autocorrelation(S.simulate_overdamped(r), 40)
    exact = A.overdamped_autocovariance(p, 0.74, c.lags)
    # long-memory estimator: compare with generous sampling bands
    assert np.max(np.abs(c.values - exact)) < 0.15 * exact[0]


# --- overdamped fit -----------------------------------------------------------------

def test_fit_recovers_noiseless_parameters():
    h, ratio, amp = FIG
    lags = 0.05 * np.arange(151)
    curve = CovarianceCurve(lags, 2.5 * I.normalized_lifetime_model(lags, h, ratio, amp), "lifetime")
    res = I.fit_overdamped_model(curve)
    assert res.converged
    assert res.h_hat == pytest.approx(h, rel=1e-6)
    assert res.ratio_hat == pytest.approx(ratio, rel=1e-6)
    assert res.amp_hat == pytest.approx(amp, rel=1e-6)
    assert res.residual_norm < 1e-10
    assert res.scale_hat == pytest.approx(2.5 / math.expm1(amp), rel=1e-6)


def test_fit_is_scale_equivariant():
    lags = 0.05 * np.arange(151)
    base = I.normalized_lifetime_model(lags, 0.7, 0.5, 1.2)
    a = I.fit_overdamped_model(CovarianceCurve(lags, base, "lifetime"))
    b = I.fit_overdamped_model(CovarianceCurve(lags, 40.0 * base, "lifetime"))
    assert b.h_hat == pytest.approx(a.h_hat, rel=1e-8)
    assert b.ratio_hat == pytest.approx(a.ratio_hat, rel=1e-8)
    assert b.scale_hat == pytest.approx(40.0 * a.scale_hat, rel=1e-8)


def test_fit_rejects_flat_and_short_curves():
    lags = 0.1 * np.arange(20)
    with pytest.raises(IllPosedError):
        I.fit_overdamped_model(CovarianceCurve(lags, np.ones(20)))
    with pytest.raises(InputError):
        I.fit_overdamped_model(CovarianceCurve(lags[:8], np.linspace(1, 0, 8)))


def test_normalized_model_limits():
    lags = np.array([0.0, 1.0, 50.0])
    for amp in (0.3, 5.0, 200.0):
        v = I.normalized_lifetime_model(lags, 0.74, 0.4, amp)
        assert v[0] == pytest.approx(1.0, rel=1e-12)
        assert np.all(np.isfinite(v)) and np.all(np.diff(v) < 0)


def test_fit_on_simulated_lifetimes():
    h, ratio, amp = FIG
    p = fig_params()
    r = S.SimRequest(p, h, "overdamped", 100_000, 0.05, 2)
    lam = lifetime_map(S.simulate_overdamped(r), LifetimeParams())
    res = I.fit_overdamped_model(I.empirical_autocorrelation(lam, 150))
    assert res.h_hat == pytest.approx(h, abs=0.03)


# --- Laplace transforms -----------------------------------------------------------

def test_laplace_of_exponential():
    lags = np.linspace(0, 60, 6001)
    lc = I.laplace_transform_curve(CovarianceCurve(lags, np.exp(-lags)), [1.0])
    assert lc.values[0] == pytest.approx(0.5, abs=1e-4)


def test_laplace_of_mittag_leffler():
    h, tau = 0.75, 1.0
    a = 2 - 2 * h
    lags = np.linspace(0, 200, 20001)
    vals = np.asarray(mittag_leffler(a, -((lags / tau) ** a)), dtype=float)
    lc = I.laplace_transform_curve(CovarianceCurve(lags, vals), [1.0])
    exact = 1.0 / (1 + 1.0 ** (-a))
    assert lc.values[0] == pytest.approx(exact, abs=1e-3)
    assert lc.meta["tail_exponent"] == pytest.approx(a, abs=0.05)


def test_laplace_band_error():
    lags = np.linspace(0, 10, 101)
    curve = CovarianceCurve(lags, np.exp(-lags))
    with pytest.raises(BandError) as err:
        I.laplace_transform_curve(curve, [0.5])
    assert (err.value.lo, err.value.hi) == pytest.approx((1.0, 1.0))
    g = I.laplace_grid(CovarianceCurve(np.linspace(0, 100, 1001), np.ones(1001)))
    assert g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(1.0) and g.size == 21


def test_overdamped_laplace_matches_quadrature():
    p = fig_params()
    s = 0.7
    f = lambda t: math.exp(-s * t) * float(A.overdamped_autocovariance(p, 0.74, t))
    from scipy import integrate

    ref = integrate.quad(f, 0, math.inf, limit=400)[0]
    assert I.overdamped_laplace(p, 0.74, s) == pytest.approx(ref, rel=1e-6)


# --- kernel recovery -------------------------------------------------------------

@pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
def test_recover_kernel_exact(h):
    p = PhysicalParams(1.3, 0.7, 1.1, 2.0)
    s = np.geomspace(0.1, 10, 25)
    c = LaplaceCurve(s, I.overdamped_laplace(p, h, s))
    k = I.recover_kernel(c, p)
    law = math.gamma(2 * h + 1) * s ** (1 - 2 * h)
    assert np.max(np.abs(k.values / law - 1)) < 1e-6


def test_kernel_round_trip():
    p = PhysicalParams(0.8, 1.7, 0.9, 1.4)
    s = np.geomspace(0.01, 100, 40)
    kern = LaplaceCurve(s, np.abs(np.random.default_rng(4).standard_normal(40)) + 0.1)
    back = I.recover_kernel(I.covariance_from_kernel(kern, p), p)
    assert np.max(np.abs(back.values / kern.values - 1)) < 1e-12


def test_recover_kernel_singular():
    p = PhysicalParams(1.0, 1.0, 1.0, 1.0)
    s = np.array([0.5, 2.0])
    c = LaplaceCurve(s, p.kbt / (p.m * p.psi * s))
    with pytest.raises(SingularRecoveryError) as err:
        I.recover_kernel(c, p)
    assert err.value.s == 0.5


def test_recovered_kernel_slope_from_simulation():
    h = 0.75
    p = fig_params(h)
    tau = A.tau(p, h)
    r = S.SimRequest(p, h, "overdamped", 100_000, tau / 5, 5)
    x = S.simulate_overdamped(r)
    curve = I.empirical_autocorrelation(x, 20_000)
    lc = I.laplace_transform_curve(curve)
    k = I.recover_kernel(lc, p)
    top = lc.s[-1]
    slope, _ = I.loglog_slope(k, top / 10, top)
    assert slope == pytest.approx(1 - 2 * h, abs=0.1)


def test_loglog_slope_of_power_law():
    s = np.geomspace(0.1, 10, 30)
    slope, se = I.loglog_slope(LaplaceCurve(s, 3 * s**-0.4))
    assert slope == pytest.approx(-0.4, abs=1e-12) and se < 1e-10


# --- potential reconstruction ---------------------------------------------------

def test_potential_of_gaussian_samples():
    v, kbt = 0.36, 1.7
    x = math.sqrt(v) * np.random.default_rng(6).standard_normal(200_000)
    pot = I.reconstruct_potential(Trace(1.0, x), kbt=kbt)
    curv, se = I.potential_curvature(pot)
    assert curv == pytest.approx(kbt / v, rel=0.10)
    assert pot.u.min() == 0
    assert np.all(pot.counts > 0)
    assert pot.x.min() >= -4 * x.std() and pot.x.max() <= 4 * x.std()


def test_potential_errors():
    with pytest.raises(InputError):
        I.reconstruct_potential(Trace(1.0, np.full(500, 2.0)))
    with pytest.raises(InputError):
        I.reconstruct_potential(Trace(1.0, np.arange(50.0)))
    with pytest.raises(InputError):
        I.reconstruct_potential(Trace(1.0, np.random.default_rng(0).standard_normal(500)), n_bins=5)


def test_potential_of_simulated_trace():
    p = fig_params()
    r = S.SimRequest(p, 0.74, "overdamped", 100_000, A.tau(p, 0.74) / 5, 1)
    pot = I.reconstruct_potential(S.simulate_overdamped(r), kbt=p.kbt)
    curv, _ = I.potential_curvature(pot)
    assert curv == pytest.approx(p.m * p.psi, rel=0.15)


# --- Hurst estimation -------------------------------------------------------------

def test_hurst_exact_power_law():
    t = np.geomspace(0.1, 100, 50)
    est = I.estimate_hurst_msd(CovarianceCurve(t, 2.0 * t**0.5, "msd"))
    assert est.h == pytest.approx(0.75, abs=1e-12)
    assert not est.boundary


def test_hurst_brownian_boundary():
    t = np.linspace(0.1, 100, 1000)
    est = I.estimate_hurst_msd(CovarianceCurve(t, t, "msd"))
    assert est.h == pytest.approx(0.5, abs=1e-12)
    assert est.boundary


def test_hurst_needs_span():
    t = np.linspace(1, 20, 50)
    with pytest.raises(InputError):
        I.estimate_hurst_msd(CovarianceCurve(t, t**0.5, "msd"))


def test_hurst_from_simulated_ensemble():
    free = PhysicalParams(1.0, 1.0, 1.0)
    dt, n = 0.1, 4000
    r = S.SimRequest(free, 0.75, "free", n, dt, 0)
    x = S.displacement_paths(S.simulate_ensemble(r, 500), dt)
    est = I.estimate_hurst_msd([Trace(dt, row) for row in x], 10.0, dt * (n - 1))
    assert est.h == pytest.approx(0.75, abs=0.03)
