import numpy as np
import pytest

from nesschain.spde_gl import (
    GLBlowUpError,
    GLSpec,
    GLState,
    gl_drift,
    gl_noise_increment,
    gl_run,
    gl_step,
    gl_synchronization_test,
    random_gl_state,
    triple_convolution,
)


def brute_force_cubic(u_full, K):
    # c_k = sum over k1 + k2 + k3 = k with every |ki| <= K
    out = np.zeros(2 * K + 1, dtype=complex)
    idx = range(-K, K + 1)
    for k1 in idx:
        for k2 in idx:
            for k in idx:
                k3 = k - k1 - k2
                if -K <= k3 <= K:
                    out[k + K] += u_full[k1 + K] * u_full[k2 + K] * u_full[k3 + K]
    return out


@pytest.mark.parametrize("K", [3, 8])
def test_convolution_matches_triple_loop(rng, K):
    spec = GLSpec(K=K, k_star=1)
    u = random_gl_state(spec, rng, amplitude=0.7, decay=0.5)
    ref = brute_force_cubic(u.u, K)
    np.testing.assert_allclose(triple_convolution(spec, u.modes), ref[K:], atol=1e-12)
    # negative modes follow from reality
    np.testing.assert_allclose(np.conj(ref[:K][::-1]), ref[K + 1 :], atol=1e-12)


def test_drift_trivial_cases():
    spec = GLSpec()
    np.testing.assert_array_equal(gl_drift(spec, np.zeros(spec.K + 1, complex)), 0)
    u = np.zeros(spec.K + 1, complex)
    u[0] = 0.8
    du = gl_drift(spec, u)
    assert du[0] == pytest.approx(0.8 - 0.8**3)
    assert np.abs(du[1:]).max() < 1e-14


def test_noise_degeneracy_and_amplitudes():
    spec = GLSpec()
    q = spec.q
    assert np.all(q[: spec.k_star + 1] == 0.0)
    assert q[spec.k_star + 1] == pytest.approx(1.0)
    k = np.arange(spec.k_star + 1, spec.K + 1)
    np.testing.assert_allclose(q[k] * k**5, (spec.k_star + 1) ** 5)
    inc = gl_noise_increment(spec, np.ones(spec.noise_width))
    assert np.all(inc[: spec.k_star + 1] == 0)
    assert np.all(inc[spec.k_star + 1 :] != 0)
    assert GLSpec(noise_scale=1.0).q[5] == pytest.approx(5.0**-5)


def test_spec_validation():
    for bad in (dict(K=3, k_star=3), dict(k_star=-1), dict(L=0.0), dict(dt=0.0), dict(K=0)):
        with pytest.raises(ValueError):
            GLSpec(**bad)


def test_state_reality(rng):
    spec = GLSpec(K=6, k_star=1)
    u = random_gl_state(spec, rng)
    assert u.modes[0].imag == 0.0
    back = GLState.from_full(u.u)
    np.testing.assert_array_equal(back.modes, u.modes)
    bad = u.u.copy()
    bad[0] += 1.0
    with pytest.raises(ValueError):
        GLState.from_full(bad)


def test_step_preserves_reality_exactly(rng):
    spec = GLSpec()
    u = random_gl_state(spec, rng)
    for xi in spec.noise().increments(0, 50):
        u = gl_step(spec, u, xi)
        assert u.modes[0].imag == 0.0
        full = u.u
        np.testing.assert_array_equal(full[: spec.K][::-1], np.conj(full[spec.K + 1 :]))


def test_zero_stays_zero_without_noise():
    spec = GLSpec()
    u = gl_step(spec, GLState(np.zeros(spec.K + 1)), np.zeros(spec.noise_width))
    assert np.all(u.modes == 0)


@pytest.mark.parametrize("a0,target", [(0.3, 1.0), (-0.2, -1.0), (1.7, 1.0)])
def test_constant_field_flows_to_fixed_point(a0, target):
    spec = GLSpec(noise_scale=0.0)
    u = GLState(np.r_[a0, np.zeros(spec.K)])
    zero = np.zeros(spec.noise_width)
    for _ in range(3000):
        u = gl_step(spec, u, zero)
    assert u.modes[0].real == pytest.approx(target, abs=1e-8)


def test_deterministic_self_convergence_first_order(rng):
    base = GLSpec(K=8, k_star=1, noise_scale=0.0)
    u0 = random_gl_state(base, rng, amplitude=1.0)
    T = 2.0
    ends = {}
    for dt in (0.02, 0.01, 0.005):
        spec = GLSpec(K=8, k_star=1, noise_scale=0.0, dt=dt)
        u = u0
        for _ in range(int(round(T / dt))):
            u = gl_step(spec, u, np.zeros(spec.noise_width))
        ends[dt] = u.modes
    d1 = np.abs(ends[0.02] - ends[0.01]).max()
    d2 = np.abs(ends[0.01] - ends[0.005]).max()
    assert 1.7 < d1 / d2 < 2.3


def test_blow_up():
    spec = GLSpec(dt=0.5, blow_up_threshold=1e3)
    u = GLState(np.r_[50.0, np.zeros(spec.K)])
    with pytest.raises(GLBlowUpError):
        for _ in range(20):
            u = gl_step(spec, u, np.zeros(spec.noise_width))


def test_run_chunking_invariant(rng):
    spec = GLSpec(K=8, k_star=1)
    u = random_gl_state(spec, rng)
    t1, m1, _ = gl_run(spec, [u], 600, spec.noise(), record_every=7)
    t2, m2, _ = gl_run(spec, [u], 600, spec.noise(), record_every=7, chunk=50)
    np.testing.assert_array_equal(m1, m2)
    assert len(t1) == 600 // 7


def test_synchronization_identical_and_distinct(rng):
    spec = GLSpec()
    a = random_gl_state(spec, rng, amplitude=2.0)
    same = gl_synchronization_test(spec, a, GLState(a.modes.copy()), 500)
    assert np.all(same["distance"] == 0)
    b = random_gl_state(spec, rng, amplitude=2.0)
    res = gl_synchronization_test(spec, a, b, 10_000, record_every=10)
    d = res["distance"]
    assert d[-1] < 1e-10
    # the path itself wiggles; its maximum over windows of length 5 falls
    # monotonically until it reaches round-off
    env = d.reshape(-1, 50).max(axis=1)
    above = env[env > 1e-12]
    assert len(above) >= 5 and np.all(np.diff(above) < 0)
