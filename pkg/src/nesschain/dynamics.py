"""Integrators for the chain SDE in effective coordinates (q, p, s).

    dq = p dt
    dp = (-grad V_eff(q) + lam sqrt(gamma) s_b) dt          at boundary sites
    ds = -(gamma s + lam / sqrt(gamma) p_b) dt - sqrt(2 T) dw

Noise acts only on ``s``.  Two schemes are provided: explicit Euler-Maruyama
and a symmetric splitting (half kick, half drift, exact OU update of ``s``
with ``p`` frozen, half drift, half kick).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from . import _kernels as K
from .model import (
    ChainConfig,
    ChainState,
    chain_potential_grad,
    effective_potential_grad,
    r_to_s,
    validate_config,
)
from .noise import NoiseStream
from .observables import StatsObserver, TrajectoryStats

log = logging.getLogger(__name__)

__all__ = [
    "IntegratorSpec",
    "BlowUpError",
    "drift",
    "step",
    "simulate",
    "time_reversal_J",
    "synchronous_pair",
    "simulate_raw_em",
    "raw_path_to_s",
    "run_ensemble",
    "equilibrate",
    "chain_noise",
    "energy_balance_defect",
]

Scheme = Literal["euler_maruyama", "splitting"]
_SCHEMES = {"euler_maruyama": K.EULER_MARUYAMA, "splitting": K.SPLITTING}


class BlowUpError(RuntimeError):
    """The energy G exceeded the abort threshold; ``state`` is the offending point."""

    def __init__(self, msg: str, step: int, state: ChainState | None = None):
        super().__init__(msg)
        self.step = step
        self.state = state


@dataclass(frozen=True)
class IntegratorSpec:
    scheme: Scheme = "splitting"
    dt: float = 1e-3
    blow_up_threshold: float = 1e12
    check_every: int = 64

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {sorted(_SCHEMES)}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0 (got {self.dt})")
        if not self.blow_up_threshold > 0:
            raise ValueError(f"blow_up_threshold must be > 0 (got {self.blow_up_threshold})")

    @property
    def code(self) -> int:
        return _SCHEMES[self.scheme]


def chain_noise(config: ChainConfig, seed: int, index: int = 0) -> NoiseStream:
    return NoiseStream(seed, index, 2 * config.d)


def _params(config: ChainConfig):
    return (
        config.onsite.exponents,
        config.onsite.coefficients,
        config.interaction.exponents,
        config.interaction.coefficients,
        config.lams.astype(float),
        config.gammas.astype(float),
        config.temperatures.astype(float),
    )


def drift(config: ChainConfig, state: ChainState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic part of (dq, dp, ds)/dt."""
    if not state.is_finite():
        raise ValueError("state contains non-finite entries")
    lam, gam = config.lams[:, None], config.gammas[:, None]
    dq = state.p.copy()
    dp = -effective_potential_grad(config, state.q)
    coupling = lam * np.sqrt(gam) * state.s
    dp[0] += coupling[0]
    dp[-1] += coupling[1]
    pb = np.stack([state.p[0], state.p[-1]])
    ds = -(gam * state.s + lam / np.sqrt(gam) * pb)
    return dq, dp, ds


def _batch(states: Iterable[ChainState]):
    states = list(states)
    return (
        np.ascontiguousarray(np.stack([s.q for s in states])),
        np.ascontiguousarray(np.stack([s.p for s in states])),
        np.ascontiguousarray(np.stack([s.s for s in states])),
    )


def _advance(config, integrator, q, p, s, xi, record_kin=False, record_heff=False):
    B, k = xi.shape[0], xi.shape[1]
    n = config.n
    phi = np.empty((B, k, 2))
    kin = np.empty((B, k, n)) if record_kin else np.empty((1, 1, 1))
    heff = np.empty((B, k)) if record_heff else np.empty((1, 1))
    on_e, on_c, in_e, in_c, lams, gams, temps = _params(config)
    status = K.advance(
        q, p, s, xi, integrator.code, integrator.dt, on_e, on_c, in_e, in_c, lams, gams, temps,
        integrator.blow_up_threshold, integrator.check_every, phi, kin, heff, record_kin, record_heff,
    )
    return status, phi, (kin if record_kin else None), (heff if record_heff else None)


def step(config: ChainConfig, integrator: IntegratorSpec, state: ChainState, xi) -> ChainState:
    """One step from ``state`` driven by ``2*d`` standard normals ``xi``.

    The sqrt(dt) scaling is applied internally.
    """
    xi = np.asarray(xi, dtype=float).reshape(1, 1, 2 * config.d)
    q, p, s = _batch([state])
    status, *_ = _advance(config, integrator, q, p, s, xi)
    out = ChainState(q[0], p[0], s[0])
    if status[0] >= 0:
        raise BlowUpError("energy G exceeded threshold", 0, out)
    return out


def simulate(
    config: ChainConfig,
    integrator: IntegratorSpec,
    initial: ChainState,
    n_steps: int,
    noise: NoiseStream,
    observers: Iterable = (),
    burn_in: int | None = None,
    chunk: int = 50_000,
    n_blocks: int = 1024,
    n_batches: int = 32,
) -> TrajectoryStats:
    """Run one trajectory, streaming chunks of per-step records to observers.

    ``burn_in`` defaults to 10% of ``n_steps``.  Each observer needs an
    ``update(step0, phi, kin, heff, state)`` method; ``phi`` is ``(k, 2)``.
    The returned stats keep about ``n_blocks`` block means.
    """
    validate_config(config)
    if noise.width != 2 * config.d:
        raise ValueError(f"noise width {noise.width} != 2*d = {2 * config.d}")
    if not initial.is_finite():
        raise ValueError("initial state contains non-finite entries")
    burn_in = n_steps // 10 if burn_in is None else burn_in
    block = max(1, (n_steps - burn_in) // n_blocks)
    stats_obs = StatsObserver(config, integrator.dt, burn_in, block, n_batches)
    observers = [stats_obs, *observers]
    want_kin = any(getattr(o, "needs_kinetic", False) for o in observers)
    want_heff = any(getattr(o, "needs_heff", False) for o in observers)
    q, p, s = _batch([initial])
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        xi = noise.increments(done, k)[None]
        status, phi, kin, heff = _advance(config, integrator, q, p, s, xi, want_kin, want_heff)
        state = ChainState(q[0].copy(), p[0].copy(), s[0].copy())
        if status[0] >= 0:
            at = done + int(status[0])
            log.error("blow-up at step %d (t=%.4g)", at, at * integrator.dt)
            raise BlowUpError(f"energy G exceeded {integrator.blow_up_threshold:g} at step {at}", at, state)
        for o in observers:
            o.update(done, phi[0], None if kin is None else kin[0], None if heff is None else heff[0], state)
        done += k
    return stats_obs.result(ChainState(q[0], p[0], s[0]))


def energy_balance_defect(
    config: ChainConfig, integrator: IntegratorSpec, initial: ChainState, xi: np.ndarray
) -> np.ndarray:
    """``H_eff(t_k) - H_eff(0) - sum_{j<k} (phi_L + phi_R)_j dt`` along one path.

    ``xi`` holds the ``(n_steps, 2*d)`` standard normals.  Pathwise the
    generator identity ``L H_eff = phi_L + phi_R`` makes this vanish as
    ``dt -> 0``; the returned series has ``n_steps + 1`` entries.
    """
    xi = np.ascontiguousarray(np.asarray(xi, dtype=float)[None])
    q, p, s = _batch([initial])
    status, phi, _, heff = _advance(config, integrator, q, p, s, xi, record_heff=True)
    if status[0] >= 0:
        raise BlowUpError("blow-up in energy balance run", int(status[0]), ChainState(q[0], p[0], s[0]))
    on_e, on_c, in_e, in_c, lams, _, _ = _params(config)
    h = np.append(heff[0], K.h_eff(q[0], p[0], on_e, on_c, in_e, in_c, lams))
    work = np.concatenate([[0.0], np.cumsum(phi[0].sum(axis=1)) * integrator.dt])
    return h - h[0] - work


def time_reversal_J(state: ChainState) -> ChainState:
    """Momentum flip (q, p, s) -> (q, -p, s)."""
    return ChainState(state.q.copy(), -state.p, state.s.copy())


def synchronous_pair(
    config: ChainConfig,
    integrator: IntegratorSpec,
    init_a: ChainState,
    init_b: ChainState,
    n_steps: int,
    noise: NoiseStream,
    record_every: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Distance between two trajectories driven by one noise realisation.

    Returns ``(times, distances)`` sampled every ``record_every`` steps.
    """
    validate_config(config)
    qa, pa, sa = _batch([init_a])
    qb, pb, sb = _batch([init_b])
    qa, pa, sa, qb, pb, sb = (x[0].copy() for x in (qa, pa, sa, qb, pb, sb))
    on_e, on_c, in_e, in_c, lams, gams, temps = _params(config)
    n_rec = n_steps // record_every
    out = np.empty(n_rec)
    chunk_rec = max(1, 200_000 // record_every)
    m = 0
    while m < n_rec:
        r = min(chunk_rec, n_rec - m)
        xi = noise.increments(m * record_every, r * record_every)
        st = K.advance_pair_distance(
            qa, pa, sa, qb, pb, sb, xi, integrator.code, integrator.dt, on_e, on_c, in_e, in_c,
            lams, gams, temps, integrator.blow_up_threshold, record_every, out[m : m + r],
        )
        if st >= 0:
            raise BlowUpError("blow-up in synchronous pair", m * record_every + int(st))
        m += r
    times = integrator.dt * record_every * np.arange(1, n_rec + 1)
    return times, out


def simulate_raw_em(
    config: ChainConfig, dt: float, q0, p0, r0, xi: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Euler-Maruyama in the raw bath coordinates (q, p, r).

        dp_b += r_b dt,  dr = (-gamma r + lam^2 gamma q_b) dt - lam sqrt(2 gamma T) dw

    ``xi`` has shape ``(n_steps, 2*d)``.  Returns the full (q, p, r) paths
    including the initial point; intended for cross-checks only.
    """
    n_steps = xi.shape[0]
    d = config.d
    lam, gam, T = config.lams[:, None], config.gammas[:, None], config.temperatures[:, None]
    q = np.array(q0, dtype=float).reshape(config.n, d)
    p = np.array(p0, dtype=float).reshape(config.n, d)
    r = np.array(r0, dtype=float).reshape(2, d)
    Q = np.empty((n_steps + 1, config.n, d))
    P = np.empty_like(Q)
    R = np.empty((n_steps + 1, 2, d))
    Q[0], P[0], R[0] = q, p, r
    amp = lam * np.sqrt(2.0 * gam * T * dt)
    for k in range(n_steps):
        qb = np.stack([q[0], q[-1]])
        f = -chain_potential_grad(config, q)
        f[0] += r[0]
        f[-1] += r[1]
        r = r + dt * (-gam * r + lam**2 * gam * qb) - amp * xi[k].reshape(2, d)
        q = q + dt * p
        p = p + dt * f
        Q[k + 1], P[k + 1], R[k + 1] = q, p, r
    return Q, P, R


def raw_path_to_s(config: ChainConfig, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Map a raw ``(q, r)`` path to effective ``s``; shape ``(k, 2, d)``."""
    return np.stack([r_to_s(config, R[k], Q[k]) for k in range(len(R))])


def equilibrate(
    config: ChainConfig,
    integrator: IntegratorSpec,
    states: list[ChainState],
    n_steps: int,
    seed: int,
    first_index: int = 0,
    temperature: float | None = None,
) -> list[ChainState]:
    """Advance a batch of states, optionally at a common bath temperature.

    Used for stationary starts; trajectory ``i`` uses noise stream
    ``first_index + i`` of ``seed``.
    """
    cfg = config
    if temperature is not None:
        from dataclasses import replace

        cfg = replace(
            config,
            left=replace(config.left, temperature=temperature),
            right=replace(config.right, temperature=temperature),
        )
    q, p, s = _batch(states)
    _run_batch(cfg, integrator, q, p, s, n_steps, seed, first_index, start_step=0)
    return [ChainState(q[i], p[i], s[i]) for i in range(len(states))]


def _run_batch(config, integrator, q, p, s, n_steps, seed, first_index, start_step, chunk=None, on_chunk=None):
    B = q.shape[0]
    if chunk is None:
        # keep per-chunk buffers around 16 MB
        chunk = int(max(100, min(20_000, 1_000_000 // max(1, B * config.d))))
    streams = [chain_noise(config, seed, first_index + i) for i in range(B)]
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        xi = np.stack([st.increments(start_step + done, k) for st in streams])
        status, phi, _, _ = _advance(config, integrator, q, p, s, xi)
        bad = np.flatnonzero(status >= 0)
        if bad.size:
            i = int(bad[0])
            raise BlowUpError(
                f"trajectory {first_index + i} blew up at step {start_step + done + int(status[i])}",
                start_step + done + int(status[i]),
                ChainState(q[i], p[i], s[i]),
            )
        if on_chunk is not None:
            on_chunk(done, phi)
        done += k


def run_ensemble(
    config: ChainConfig,
    integrator: IntegratorSpec,
    n_traj: int,
    horizons_steps: Iterable[int],
    seed: int,
    burn_in_steps: int,
    first_index: int = 0,
) -> dict[int, np.ndarray]:
    """Integrated boundary heats for an ensemble of stationary-start trajectories.

    Each trajectory starts from the zero state and runs ``burn_in_steps`` on
    its own noise stream (index ``first_index + i``); afterwards the heats
    ``Q_L = int phi_L dt`` and ``Q_R`` are accumulated by the left-endpoint
    rule.  Returns ``{horizon_steps: array (n_traj, 2)}`` of ``(Q_L, Q_R)``;
    ``W = Q_L/T_L + Q_R/T_R``.
    """
    validate_config(config)
    horizons = sorted(set(int(h) for h in horizons_steps))
    total = burn_in_steps + horizons[-1]
    q = np.zeros((n_traj, config.n, config.d))
    p = np.zeros_like(q)
    s = np.zeros((n_traj, 2, config.d))
    Q = np.zeros((n_traj, 2))
    out: dict[int, np.ndarray] = {h: np.zeros((n_traj, 2)) for h in horizons if h == 0}
    dt = integrator.dt

    def collect(done, phi):
        nonlocal Q
        k = phi.shape[1]
        lo = done - burn_in_steps
        a = max(0, -lo)
        if a >= k:
            return
        cum = Q[:, None, :] + np.cumsum(phi[:, a:, :], axis=1) * dt
        for h in horizons:
            j = h - (lo + a) - 1
            if h > 0 and 0 <= j < cum.shape[1]:
                out[h] = cum[:, j, :].copy()
        Q = cum[:, -1, :].copy()

    _run_batch(config, integrator, q, p, s, total, seed, first_index, 0, on_chunk=collect)
    return out
