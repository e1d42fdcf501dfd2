import numpy as np
import pytest

from nesschain.dynamics import time_reversal_J
from nesschain.model import ChainConfig, ChainState, ReservoirSpec
from nesschain.observables import (
    InsufficientSamplesError,
    WObserver,
    accumulate_W,
    entropy_production_rate,
    flux,
    flux_sample,
    stationary_average,
)


def test_flux_formula():
    cfg = ChainConfig(n=2, d=2, left=ReservoirSpec(0.5, 4.0, 2.0), right=ReservoirSpec(1.0, 1.0, 1.0))
    st = ChainState(np.zeros((2, 2)), [[1.0, 2.0], [3.0, -1.0]], [[0.5, 0.5], [1.0, 2.0]])
    pl, pr = flux(cfg, st)
    assert pl == pytest.approx(0.5 * 2.0 * (0.5 + 1.0))
    assert pr == pytest.approx(1.0 * (3.0 - 2.0))
    fs = flux_sample(cfg, st)
    assert fs.sigma == pytest.approx(pl / 2.0 + pr / 1.0)
    assert entropy_production_rate(cfg, st) == pytest.approx(fs.sigma)


def test_flux_odd_under_time_reversal(rng):
    cfg = ChainConfig(n=3, d=2)
    for _ in range(20):
        st = ChainState.from_vector(cfg, rng.standard_normal(cfg.phase_dim))
        assert entropy_production_rate(cfg, time_reversal_J(st)) == pytest.approx(-entropy_production_rate(cfg, st))


def test_accumulate_W_left_endpoint():
    sig = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(accumulate_W(sig, 0.5), [0.5, 1.5, 3.0, 5.0])
    np.testing.assert_allclose(accumulate_W(sig, 0.5, [0, 2, 4]), [0.0, 1.5, 5.0])


def test_W_observer_matches_accumulate():
    T = np.array([2.0, 1.0])
    phi = np.random.default_rng(0).standard_normal((1000, 2))
    obs = WObserver(T, 0.01, (0, 10, 333, 1000))
    for a in range(0, 1000, 300):
        obs.update(a, phi[a : a + 300], None, None, None)
    sig = phi[:, 0] / 2 + phi[:, 1]
    ref = accumulate_W(sig, 0.01, [0, 10, 333, 1000])
    assert [obs.values[c] for c in (0, 10, 333, 1000)] == pytest.approx(ref.tolist())


def test_stationary_average_trivial():
    assert stationary_average(np.full(640, 3.5)) == (3.5, 0.0)
    m, se = stationary_average(np.tile([1.0, -1.0], 3200))
    assert m == 0.0 and se == 0.0
    with pytest.raises(InsufficientSamplesError):
        stationary_average(np.ones(63), n_batches=32)
    with pytest.raises(InsufficientSamplesError):
        stationary_average(np.ones(100), burn_in=50, n_batches=32)


def _ar1(rng, n, phi, mu):
    x = np.empty(n)
    x[0] = mu
    eps = rng.standard_normal(n)
    for k in range(1, n):
        x[k] = mu + phi * (x[k - 1] - mu) + eps[k]
    return x


def test_batch_means_coverage_on_ar1():
    # strongly correlated series: naive iid errors would under-cover badly
    hits = 0
    trials = 100
    for seed in range(trials):
        x = _ar1(np.random.default_rng(seed), 40_000, 0.9, 2.0)
        m, se = stationary_average(x, burn_in=0, n_batches=32)
        hits += abs(m - 2.0) < 3 * se
    assert hits >= 95


def test_batch_error_shrinks():
    rng = np.random.default_rng(1)
    _, se1 = stationary_average(rng.standard_normal(10_000))
    _, se2 = stationary_average(rng.standard_normal(160_000))
    assert 2.5 < se1 / se2 < 6.5
