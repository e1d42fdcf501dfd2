"""Galerkin-truncated stochastic Ginzburg-Landau equation in Fourier modes.

    du_k = (1 - (k/L)^2) u_k dt - sum_{k1+k2+k3=k} u_k1 u_k2 u_k3 dt + q_k dw_k

for |k| <= K, with the cubic sum restricted to modes inside the truncation.
The field is real, ``u_{-k} = conj(u_k)``, so only ``k = 0..K`` are stored
and the constraint holds exactly.  Forcing vanishes on ``|k| <= k_star`` and
is ``q_k = c |k|^-5`` above; by default ``c = (k_star + 1)^5`` so the first
forced mode has unit amplitude.

Complex Wiener increments for ``k >= 1`` are ``(xi_re + i xi_im) sqrt(dt/2)``
so that ``E|dw_k|^2 = dt``; the ``k = 0`` increment is real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import NoiseStream

__all__ = [
    "GLSpec",
    "GLState",
    "GLBlowUpError",
    "gl_drift",
    "gl_noise_increment",
    "gl_step",
    "gl_run",
    "gl_synchronization_test",
    "random_gl_state",
    "triple_convolution",
]


class GLBlowUpError(RuntimeError):
    pass


@dataclass(frozen=True)
class GLSpec:
    L: float = 10.0
    K: int = 32
    k_star: int = 3
    noise_scale: float | None = None
    noise_decay: float = 5.0
    dt: float = 0.01
    seed: int = 0
    blow_up_threshold: float = 1e6

    def __post_init__(self):
        if not (isinstance(self.K, (int, np.integer)) and self.K >= 1):
            raise ValueError(f"K must be a positive integer (got {self.K!r})")
        if not (0 <= self.k_star < self.K):
            raise ValueError(f"need K > k_star >= 0 (got K={self.K}, k_star={self.k_star})")
        if not self.L > 0:
            raise ValueError(f"L must be > 0 (got {self.L})")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0 (got {self.dt})")

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(self.K + 1)

    @property
    def linear_rates(self) -> np.ndarray:
        k = self.wavenumbers
        return 1.0 - (k / self.L) ** 2

    @property
    def noise_constant(self) -> float:
        if self.noise_scale is not None:
            return float(self.noise_scale)
        return float((self.k_star + 1) ** self.noise_decay)

    @property
    def q(self) -> np.ndarray:
        """Forcing amplitudes ``q_k`` for ``k = 0..K`` (``q_{-k} = q_k``)."""
        k = self.wavenumbers.astype(float)
        out = np.zeros(self.K + 1)
        hi = k > self.k_star
        out[hi] = self.noise_constant * k[hi] ** (-self.noise_decay)
        return out

    @property
    def noise_width(self) -> int:
        return 2 * self.K + 1

    def noise(self, stream_index: int = 0) -> NoiseStream:
        return NoiseStream(self.seed, stream_index, self.noise_width)

    @property
    def fft_size(self) -> int:
        # products reach |k| = 3K; M > 4K keeps aliases out of |k| <= K
        return int(2 ** np.ceil(np.log2(4 * self.K + 2)))


@dataclass
class GLState:
    """Modes ``u_0 .. u_K``; ``u_0`` is real."""

    modes: np.ndarray

    def __post_init__(self):
        self.modes = np.array(self.modes, dtype=complex)
        self.modes[0] = self.modes[0].real

    @property
    def u(self) -> np.ndarray:
        """Full vector for ``k = -K..K``."""
        return np.concatenate([np.conj(self.modes[:0:-1]), self.modes])

    @classmethod
    def from_full(cls, u) -> "GLState":
        u = np.asarray(u, dtype=complex)
        K = (u.size - 1) // 2
        if not np.allclose(u[:K][::-1], np.conj(u[K + 1 :]), atol=1e-12) or abs(u[K].imag) > 1e-12:
            raise ValueError("vector violates u_{-k} = conj(u_k)")
        return cls(u[K:].copy())

    def norm(self) -> float:
        return _norm(self.modes)


def _norm(modes: np.ndarray) -> np.ndarray | float:
    m = np.asarray(modes)
    val = np.abs(m[..., 0]) ** 2 + 2.0 * np.sum(np.abs(m[..., 1:]) ** 2, axis=-1)
    return np.sqrt(val)


def triple_convolution(spec: GLSpec, modes: np.ndarray) -> np.ndarray:
    """``c_k = sum_{k1+k2+k3=k, |ki|<=K} u_k1 u_k2 u_k3`` for k = 0..K.

    Works on the last axis; uses a dealiased real FFT.
    """
    M = spec.fft_size
    a = np.zeros(modes.shape[:-1] + (M // 2 + 1,), dtype=complex)
    a[..., : spec.K + 1] = modes
    field = np.fft.irfft(a, n=M, axis=-1) * M
    c = np.fft.rfft(field**3, axis=-1) / M
    out = c[..., : spec.K + 1].copy()
    out[..., 0] = out[..., 0].real
    return out


def gl_drift(spec: GLSpec, state: GLState | np.ndarray) -> np.ndarray:
    modes = state.modes if isinstance(state, GLState) else np.asarray(state, dtype=complex)
    return spec.linear_rates * modes - triple_convolution(spec, modes)


def gl_noise_increment(spec: GLSpec, xi: np.ndarray) -> np.ndarray:
    """Complex increments ``q_k dw_k`` (k = 0..K) from ``2K+1`` standard normals.

    Layout of ``xi``: ``[re_0, re_1, im_1, re_2, im_2, ...]``.
    """
    xi = np.asarray(xi, dtype=float)
    K = spec.K
    dw = np.empty(xi.shape[:-1] + (K + 1,), dtype=complex)
    dw[..., 0] = xi[..., 0] * np.sqrt(spec.dt)
    dw[..., 1:] = (xi[..., 1::2] + 1j * xi[..., 2::2]) * np.sqrt(spec.dt / 2.0)
    return spec.q * dw


def _step_modes(spec: GLSpec, modes: np.ndarray, xi: np.ndarray) -> np.ndarray:
    rhs = modes - spec.dt * triple_convolution(spec, modes) + gl_noise_increment(spec, xi)
    new = rhs / (1.0 - spec.dt * spec.linear_rates)
    new[..., 0] = new[..., 0].real
    return new


def gl_step(spec: GLSpec, state: GLState, xi) -> GLState:
    """Semi-implicit step: linear part implicit, cubic part explicit."""
    new = _step_modes(spec, state.modes, np.asarray(xi, dtype=float))
    if not np.all(np.isfinite(new)) or _norm(new) > spec.blow_up_threshold:
        raise GLBlowUpError(f"|u| exceeded {spec.blow_up_threshold:g}")
    return GLState(new)


def gl_run(
    spec: GLSpec,
    initials: list[GLState],
    n_steps: int,
    noise: NoiseStream,
    record_every: int = 10,
    chunk: int = 5000,
):
    """Advance several states with the same noise stream.

    Returns ``(times, modes)`` where ``modes`` is ``(n_records, n_states, K+1)``
    taken every ``record_every`` steps, plus the final states.
    """
    if noise.width != spec.noise_width:
        raise ValueError(f"noise width {noise.width} != {spec.noise_width}")
    u = np.stack([s.modes for s in initials])
    records = []
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        xi = noise.increments(done, k)
        for j in range(k):
            u = _step_modes(spec, u, xi[j])
            if (done + j + 1) % record_every == 0:
                nrm = _norm(u)
                if not np.all(np.isfinite(nrm)) or nrm.max() > spec.blow_up_threshold:
                    raise GLBlowUpError(f"|u| exceeded {spec.blow_up_threshold:g} at step {done + j + 1}")
                records.append(u.copy())
        done += k
    times = spec.dt * record_every * np.arange(1, len(records) + 1)
    modes = np.array(records).reshape(len(records), len(initials), spec.K + 1)
    return times, modes, [GLState(x) for x in u]


def random_gl_state(spec: GLSpec, rng: np.random.Generator, amplitude: float = 1.0, decay: float = 1.0) -> GLState:
    """Random real field with mode amplitudes ``amplitude * (1+k)^-decay``."""
    k = spec.wavenumbers
    z = (rng.standard_normal(spec.K + 1) + 1j * rng.standard_normal(spec.K + 1)) / np.sqrt(2.0)
    return GLState(amplitude * z * (1.0 + k) ** (-decay))


def gl_synchronization_test(
    spec: GLSpec,
    u_a: GLState,
    u_b: GLState,
    n_steps: int,
    record_every: int = 10,
    stream_index: int = 0,
) -> dict[str, np.ndarray]:
    """Drive two states with identical noise.

    Returns ``time``, ``distance`` (``|u_a - u_b|``) and the low-mode energies
    ``|u_1|^2`` of each trajectory at every record.
    """
    times, modes, _ = gl_run(spec, [u_a, u_b], n_steps, spec.noise(stream_index), record_every)
    dist = _norm(modes[:, 0] - modes[:, 1])
    return {
        "time": times,
        "distance": dist,
        "low_mode_a": np.abs(modes[:, 0, 1]) ** 2,
        "low_mode_b": np.abs(modes[:, 1, 1]) ** 2,
    }
