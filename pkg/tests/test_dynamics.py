import numpy as np
import pytest
from scipy.linalg import expm

from nesschain.dynamics import (
    BlowUpError,
    IntegratorSpec,
    chain_noise,
    drift,
    equilibrate,
    raw_path_to_s,
    run_ensemble,
    simulate,
    simulate_raw_em,
    step,
    synchronous_pair,
    time_reversal_J,
)
from nesschain.harmonic_oracle import gibbs_covariance, linearize
from nesschain.model import ChainConfig, ChainState, ReservoirSpec, r_to_s, s_to_r
from nesschain.observables import stationary_average

from conftest import harmonic_chain

EM = IntegratorSpec("euler_maruyama")
SPLIT = IntegratorSpec("splitting")


def _one_step_matrix(cfg, integ):
    """Deterministic one-step map and noise matrix of a linear chain."""
    m = cfg.phase_dim
    zero = np.zeros(2 * cfg.d)
    M = np.column_stack(
        [step(cfg, integ, ChainState.from_vector(cfg, e), zero).to_vector() for e in np.eye(m)]
    )
    origin = ChainState.zeros(cfg)
    N = np.column_stack([step(cfg, integ, origin, e).to_vector() for e in np.eye(2 * cfg.d)])
    return M, N


def _van_loan(A, BBt, h):
    m = A.shape[0]
    C = np.zeros((2 * m, 2 * m))
    C[:m, :m] = -A
    C[:m, m:] = BBt
    C[m:, m:] = A.T
    E = expm(C * h)
    Phi = E[m:, m:].T
    return Phi, Phi @ E[:m, m:]


def test_drift_matches_linearisation(rng):
    cfg = harmonic_chain(n=3, d=2)
    sys = linearize(cfg)
    x = rng.standard_normal(cfg.phase_dim)
    dq, dp, ds = drift(cfg, ChainState.from_vector(cfg, x))
    np.testing.assert_allclose(np.concatenate([dq.ravel(), dp.ravel(), ds.ravel()]), sys.A @ x, atol=1e-12)


def test_em_step_is_explicit_formula(rng):
    cfg = ChainConfig(n=3, d=2)
    integ = IntegratorSpec("euler_maruyama", dt=0.01)
    st = ChainState.from_vector(cfg, rng.standard_normal(cfg.phase_dim))
    xi = rng.standard_normal(4)
    new = step(cfg, integ, st, xi)
    dq, dp, ds = drift(cfg, st)
    amp = np.sqrt(2 * cfg.temperatures * integ.dt)[:, None]
    np.testing.assert_allclose(new.q, st.q + integ.dt * dq, atol=1e-14)
    np.testing.assert_allclose(new.p, st.p + integ.dt * dp, atol=1e-14)
    np.testing.assert_allclose(new.s, st.s + integ.dt * ds - amp * xi.reshape(2, 2), atol=1e-14)


@pytest.mark.parametrize("scheme,order", [("euler_maruyama", 2), ("splitting", 3)])
def test_local_error_order_against_exact_transition(scheme, order):
    cfg = harmonic_chain(n=3, TL=1.5, TR=0.7)
    sys = linearize(cfg)
    errs_mean, errs_cov = [], []
    for h in (0.08, 0.04, 0.02):
        integ = IntegratorSpec(scheme, dt=h)
        M, N = _one_step_matrix(cfg, integ)
        Phi, Q = _van_loan(sys.A, sys.B @ sys.B.T, h)
        errs_mean.append(np.abs(M - Phi).max())
        errs_cov.append(np.abs(N @ N.T - Q).max())
    rates_mean = np.log2(np.array(errs_mean[:-1]) / errs_mean[1:])
    assert np.all(np.abs(rates_mean - order) < 0.25), rates_mean
    if scheme == "splitting":
        rates_cov = np.log2(np.array(errs_cov[:-1]) / errs_cov[1:])
        assert np.all(rates_cov > 2.75), rates_cov


def test_zero_steps():
    cfg = ChainConfig()
    init = ChainState.from_vector(cfg, np.arange(cfg.phase_dim, dtype=float) * 0.1)
    stats = simulate(cfg, SPLIT, init, 0, chain_noise(cfg, 0))
    assert stats.n_samples == 0 and stats.blocks_phi.shape == (0, 2)
    np.testing.assert_array_equal(stats.final_state.to_vector(), init.to_vector())


def test_determinism_and_chunk_invariance():
    cfg = ChainConfig()
    init = ChainState.zeros(cfg)
    a = simulate(cfg, SPLIT, init, 30_000, chain_noise(cfg, 5))
    b = simulate(cfg, SPLIT, init, 30_000, chain_noise(cfg, 5))
    c = simulate(cfg, SPLIT, init, 30_000, chain_noise(cfg, 5), chunk=777)
    for other in (b, c):
        np.testing.assert_array_equal(a.final_state.to_vector(), other.final_state.to_vector())
    np.testing.assert_array_equal(a.blocks_phi, b.blocks_phi)
    assert a.W_final == b.W_final
    # block sums straddling a chunk edge are added in a different order
    np.testing.assert_allclose(a.blocks_phi, c.blocks_phi, rtol=0, atol=1e-14)
    assert a.W_final == pytest.approx(c.W_final, abs=1e-12)
    d = simulate(cfg, SPLIT, init, 30_000, chain_noise(cfg, 6))
    assert not np.array_equal(a.final_state.to_vector(), d.final_state.to_vector())


def test_noise_width_checked():
    cfg = ChainConfig(d=2)
    with pytest.raises(ValueError, match="noise width"):
        simulate(cfg, SPLIT, ChainState.zeros(cfg), 10, chain_noise(ChainConfig(d=1), 0))


def test_blow_up_reported():
    cfg = ChainConfig(n=2)
    integ = IntegratorSpec("euler_maruyama", dt=0.5, blow_up_threshold=1e8)
    with pytest.raises(BlowUpError) as exc:
        simulate(cfg, integ, ChainState.from_vector(cfg, np.full(cfg.phase_dim, 3.0)), 10_000, chain_noise(cfg, 0))
    assert exc.value.step >= 0
    assert exc.value.state is not None


def test_time_reversal_involution(rng):
    cfg = ChainConfig(n=3, d=2)
    x = ChainState.from_vector(cfg, rng.standard_normal(cfg.phase_dim))
    y = time_reversal_J(time_reversal_J(x))
    np.testing.assert_array_equal(x.to_vector(), y.to_vector())
    z = ChainState.from_vector(cfg, np.r_[rng.standard_normal(3 * 2), np.zeros(3 * 2), rng.standard_normal(4)])
    np.testing.assert_array_equal(time_reversal_J(z).to_vector(), z.to_vector() * np.r_[np.ones(6), -np.ones(6), np.ones(4)] + 0.0)


def test_synchronous_pair_identical_start():
    cfg = ChainConfig()
    a = ChainState.from_vector(cfg, np.linspace(-1, 1, cfg.phase_dim))
    _, dist = synchronous_pair(cfg, SPLIT, a, a.copy(), 5000, chain_noise(cfg, 1), record_every=100)
    assert np.all(dist == 0.0)


def test_synchronous_pair_harmonic_is_deterministic_contraction(rng):
    # the difference of two linear trajectories with shared noise obeys dx = A x dt
    cfg = harmonic_chain()
    sys = linearize(cfg)
    xa, xb = rng.standard_normal(cfg.phase_dim), rng.standard_normal(cfg.phase_dim)
    integ = IntegratorSpec("splitting", dt=1e-3)
    t, dist = synchronous_pair(
        cfg, integ, ChainState.from_vector(cfg, xa), ChainState.from_vector(cfg, xb), 20_000, chain_noise(cfg, 2), 1000
    )
    exact = [np.linalg.norm(expm(sys.A * tt) @ (xa - xb)) for tt in t]
    np.testing.assert_allclose(dist, exact, rtol=1e-5)


def test_raw_and_effective_em_agree(rng):
    cfg = ChainConfig(n=3, left=ReservoirSpec(0.7, 1.3, 2.0), right=ReservoirSpec(0.4, 0.8, 1.0))
    dt = 1e-3
    q0, p0, s0 = rng.standard_normal((3, 1)), rng.standard_normal((3, 1)), rng.standard_normal((2, 1))
    xi = chain_noise(cfg, 4).increments(0, 2000)
    Q, P, R = simulate_raw_em(cfg, dt, q0, p0, s_to_r(cfg, s0, q0), xi)
    S = raw_path_to_s(cfg, Q, R)
    st = ChainState(q0, p0, s0)
    integ = IntegratorSpec("euler_maruyama", dt=dt)
    for k in range(2000):
        st = step(cfg, integ, st, xi[k])
        assert np.abs(st.q - Q[k + 1]).max() < 1e-10
        assert np.abs(st.p - P[k + 1]).max() < 1e-10
        assert np.abs(st.s - S[k + 1]).max() < 1e-10
    np.testing.assert_allclose(r_to_s(cfg, R[0], Q[0]), s0)


def test_equal_temperature_equipartition():
    cfg = harmonic_chain(TL=1.0, TR=1.0)
    stats = simulate(cfg, SPLIT, ChainState.zeros(cfg), 3_000_000, chain_noise(cfg, 21))
    T, se = stats.kinetic_temperatures()
    assert np.all(np.abs(T - 1.0) < 3 * se), (T, se)
    m, se_s = stats.sigma
    assert abs(m) < 3 * se_s


class _Snapshots:
    needs_kinetic = False

    def __init__(self, burn_in):
        self.burn_in = burn_in
        self.x = []

    def update(self, step0, phi, kin, heff, state):
        if step0 >= self.burn_in:
            self.x.append(state.to_vector())


def test_equal_temperature_gibbs_covariance():
    T = 1.3
    cfg = harmonic_chain(n=2, TL=T, TR=T)
    obs = _Snapshots(burn_in=200_000)
    simulate(cfg, SPLIT, ChainState.zeros(cfg), 4_000_000, chain_noise(cfg, 8), observers=[obs], chunk=200)
    X = np.array(obs.x)
    ref = gibbs_covariance(cfg, T)
    z = []
    for i in range(X.shape[1]):
        for j in range(i, X.shape[1]):
            m, se = stationary_average(X[:, i] * X[:, j], n_batches=32)
            z.append((m - ref[i, j]) / se)
    z = np.abs(z)
    assert np.mean(z < 3) >= 0.9 and z.max() < 4.5, z


def test_equilibrate_and_ensemble_shapes():
    cfg = ChainConfig(n=2)
    states = equilibrate(cfg, SPLIT, [ChainState.zeros(cfg)] * 3, 1000, seed=1, temperature=1.5)
    assert len(states) == 3 and all(s.is_finite() for s in states)
    assert not np.array_equal(states[0].to_vector(), states[1].to_vector())
    heats = run_ensemble(cfg, SPLIT, 5, [100, 300], seed=3, burn_in_steps=200)
    assert set(heats) == {100, 300} and heats[300].shape == (5, 2)
    # chunking must not matter: the last record equals the sum of per-step fluxes
    again = run_ensemble(cfg, SPLIT, 5, [300], seed=3, burn_in_steps=200)
    np.testing.assert_allclose(again[300], heats[300], rtol=0, atol=1e-13)
