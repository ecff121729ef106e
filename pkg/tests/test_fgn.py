import math

import numpy as np
import pytest

from subdiffusion import fgn
from subdiffusion.errors import InputError, ParameterError, SingularityError
from subdiffusion.gaussian import StationarySampler, circulant_eigenvalues, rng_for
from subdiffusion.trace import Trace

from conftest import lag1_autocorr


def test_autocovariance_values():
    assert fgn.fgn_autocovariance(0.75, 0) == 1.0
    assert fgn.fgn_autocovariance(0.5, 1) == pytest.approx(0.0, abs=1e-15)
    assert fgn.fgn_autocovariance(0.75, 1) == pytest.approx(0.4142136, abs=1e-7)


def test_autocovariance_rejects_bad_h():
    for h in (0.0, 1.0, -0.2, 1.5, math.nan):
        with pytest.raises(ParameterError):
            fgn.fgn_autocovariance(h, 1)


def test_autocovariance_tail_matches_kernel():
    # gamma(k) -> h(2h-1) k^(2h-2) = K_H(k)/2 for large k
    k = 1e4
    assert fgn.fgn_autocovariance(0.75, k) == pytest.approx(0.5 * fgn.kernel_K(0.75, k), rel=1e-6)


def test_kernel_values():
    assert fgn.kernel_K(0.75, 1.0) == pytest.approx(0.75, abs=1e-12)
    assert fgn.kernel_K(0.75, 2.0) == pytest.approx(0.5303301, abs=1e-7)
    assert fgn.kernel_K(0.75, -2.0) == fgn.kernel_K(0.75, 2.0)
    with pytest.raises(SingularityError):
        fgn.kernel_K(0.75, 0.0)
    with pytest.raises(ParameterError):
        fgn.kernel_K(0.5, 1.0)


@pytest.mark.parametrize("h, rho", [(0.5, 0.0), (0.75, 0.4142136)])
def test_lag1_autocorrelation(h, rho):
    n = 2**14
    x = fgn.sample_fgn(h, n, seed=1).values
    se = 1 / math.sqrt(n) * (3 if h > 0.5 else 1)  # long memory inflates the variance
    assert abs(lag1_autocorr(x) - rho) < 3 * se


def test_determinism_and_streams():
    a = fgn.sample_fgn(0.75, 64, seed=7)
    b = fgn.sample_fgn(0.75, 64, seed=7)
    assert np.array_equal(a.values, b.values)
    c = fgn.sample_fgn(0.75, 64, seed=7, path_index=1)
    assert not np.array_equal(a.values, c.values)
    ens = fgn.sample_fgn_ensemble(0.75, 64, 7, 3)
    assert np.array_equal(ens[0], a.values) and np.array_equal(ens[1], c.values)


def test_disjoint_paths_uncorrelated():
    ens = fgn.sample_fgn_ensemble(0.7, 4096, 3, 4)
    r = np.corrcoef(ens)
    off = r[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 4 / math.sqrt(4096) * 3


def test_sample_rejects_bad_n():
    with pytest.raises(InputError):
        fgn.sample_fgn(0.7, 0, 1)


def test_fbm_prefix_and_wiener_variance():
    ens = fgn.sample_fgn_ensemble(0.5, 256, 11, 2000)
    dt = 0.1
    paths = np.stack([fgn.fbm_from_fgn(Trace(1.0, row), dt, 0.5).values for row in ens])
    assert np.all(paths[:, 0] == 0)
    k = np.array([16, 64, 256])
    var = paths[:, k].var(axis=0)
    # Var = k dt; relative sampling error of a variance is sqrt(2/n)
    assert np.all(np.abs(var / (k * dt) - 1) < 4 * math.sqrt(2 / 2000))


def test_fbm_variance_slope():
    n, dt = 1024, 0.01
    ens = fgn.sample_fgn_ensemble(0.75, n, 5, 500)
    paths = np.stack([fgn.fbm_from_fgn(Trace(1.0, row), dt, 0.75).values for row in ens])
    k = np.unique(np.geomspace(1, n, 20).astype(int))
    slope = np.polyfit(np.log(k * dt), np.log(paths[:, k].var(axis=0)), 1)[0]
    assert slope == pytest.approx(1.5, abs=0.05)


def test_fbm_reads_h_from_meta():
    tr = fgn.sample_fgn(0.6, 16, 1)
    assert fgn.fbm_from_fgn(tr, 1.0).meta["h"] == 0.6
    with pytest.raises(InputError):
        fgn.fbm_from_fgn(Trace(1.0, np.ones(4)), 1.0)


def test_circulant_eigenvalues_nonnegative_for_fgn():
    for h in (0.1, 0.5, 0.75, 0.95):
        acov = fgn.fgn_autocovariance(h, np.arange(513))
        assert circulant_eigenvalues(acov).min() > -1e-10


def test_sampler_dense_fallback_for_indefinite_embedding():
    # a smooth covariance tabulated on exactly n lags: the minimal embedding
    # is indefinite and the table cannot be extended, so the dense path runs
    n = 64
    table = np.exp(-(np.arange(n) / 20.0) ** 2)
    s = StationarySampler(table, n)
    assert s.method == "dense"
    x = s.sample(rng_for(1), size=20000)
    se = math.sqrt((1 + table[10] ** 2) / 20000)
    assert abs(np.mean(x[:, 0] * x[:, 10]) - table[10]) < 4 * se
