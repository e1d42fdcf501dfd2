"""Boundary heat fluxes, entropy production and stationary averages.

Sign convention: ``phi_left`` is the energy per unit time flowing from the
left bath into the chain (likewise ``phi_right``).  Entropy production is
``sigma = phi_left / T_L + phi_right / T_R`` and ``W(t)`` is its time
integral along a trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ChainConfig, ChainState

__all__ = [
    "FluxSample",
    "TrajectoryStats",
    "StatsObserver",
    "WObserver",
    "InsufficientSamplesError",
    "flux",
    "entropy_production_rate",
    "flux_sample",
    "accumulate_W",
    "stationary_average",
    "kinetic_temperature_profile",
]

MIN_BATCHES = 8


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class FluxSample:
    phi_left: float
    phi_right: float
    sigma: float


def flux(config: ChainConfig, state: ChainState) -> tuple[float, float]:
    """Instantaneous (phi_left, phi_right) = lam sqrt(gamma) p_b . s."""
    cl = config.left.lam * np.sqrt(config.left.gamma)
    cr = config.right.lam * np.sqrt(config.right.gamma)
    return (
        float(cl * state.p[0] @ state.s[0]),
        float(cr * state.p[-1] @ state.s[1]),
    )


def entropy_production_rate(config: ChainConfig, state: ChainState) -> float:
    pl, pr = flux(config, state)
    return pl / config.left.temperature + pr / config.right.temperature


def flux_sample(config: ChainConfig, state: ChainState) -> FluxSample:
    pl, pr = flux(config, state)
    return FluxSample(pl, pr, pl / config.left.temperature + pr / config.right.temperature)


def accumulate_W(sigma: np.ndarray, dt: float, checkpoints=None) -> np.ndarray:
    """Left-endpoint quadrature of a sigma series.

    ``sigma[k]`` is the rate at the start of step k.  Returns ``W`` after each
    step (length ``len(sigma)``) or only at the requested step counts.
    """
    w = np.cumsum(np.asarray(sigma, dtype=float) * dt, axis=-1)
    if checkpoints is None:
        return w
    idx = np.asarray(checkpoints, dtype=int)
    out = np.zeros(w.shape[:-1] + idx.shape)
    pos = idx > 0
    out[..., pos] = w[..., idx[pos] - 1]
    return out


def stationary_average(series, burn_in: int = 0, n_batches: int = 32) -> tuple[float, float]:
    """Batch-means estimate of a stationary mean and its standard error.

    Leading samples that do not fill a whole batch are dropped together with
    ``burn_in``.
    """
    x = np.asarray(series, dtype=float)[burn_in:]
    if n_batches < 2 or x.size < 2 * n_batches:
        raise InsufficientSamplesError(
            f"need at least {2 * n_batches} samples after burn-in for {n_batches} batches, got {x.size}"
        )
    size = x.size // n_batches
    batches = x[x.size - size * n_batches :].reshape(n_batches, size).mean(axis=1)
    mean = float(batches.mean())
    se = float(np.sqrt(batches.var(ddof=1) / n_batches))
    return mean, se


@dataclass
class TrajectoryStats:
    """Summary of one trajectory after burn-in.

    Block means (one row per block of ``block_size`` steps) are kept so that
    batch-means errors can be recomputed with other batch counts.
    """

    dt: float
    burn_in: int
    n_samples: int
    block_size: int
    temperatures: np.ndarray
    blocks_phi: np.ndarray  # (n_blocks, 2)
    blocks_kin: np.ndarray  # (n_blocks, n); |p_j|^2 / d
    W_final: float
    final_state: ChainState | None = None
    n_batches: int = 32

    @property
    def blocks_sigma(self) -> np.ndarray:
        return self.blocks_phi[:, 0] / self.temperatures[0] + self.blocks_phi[:, 1] / self.temperatures[1]

    def _avg(self, series) -> tuple[float, float]:
        nb = min(self.n_batches, len(series) // 2)
        if nb < MIN_BATCHES:
            raise InsufficientSamplesError(f"only {len(series)} blocks; need {2 * MIN_BATCHES}")
        return stationary_average(series, 0, nb)

    @property
    def phi_left(self) -> tuple[float, float]:
        return self._avg(self.blocks_phi[:, 0])

    @property
    def phi_right(self) -> tuple[float, float]:
        return self._avg(self.blocks_phi[:, 1])

    @property
    def phi_total(self) -> tuple[float, float]:
        return self._avg(self.blocks_phi.sum(axis=1))

    @property
    def sigma(self) -> tuple[float, float]:
        return self._avg(self.blocks_sigma)

    def kinetic_temperatures(self) -> tuple[np.ndarray, np.ndarray]:
        res = [self._avg(self.blocks_kin[:, j]) for j in range(self.blocks_kin.shape[1])]
        return np.array([m for m, _ in res]), np.array([e for _, e in res])


def kinetic_temperature_profile(stats: TrajectoryStats) -> tuple[np.ndarray, np.ndarray]:
    """Per-site ``T_j = <|p_j|^2>/d`` and batch-means standard errors."""
    return stats.kinetic_temperatures()


class _BlockAccumulator:
    def __init__(self, width: int, block_size: int):
        self.block_size = block_size
        self.partial = np.zeros(width)
        self.count = 0
        self.blocks: list[np.ndarray] = []

    def push(self, values: np.ndarray) -> None:
        if values.shape[0] == 0:
            return
        bs = self.block_size
        i = 0
        if self.count:
            take = min(bs - self.count, values.shape[0])
            self.partial += values[:take].sum(axis=0)
            self.count += take
            i = take
            if self.count == bs:
                self.blocks.append(self.partial / bs)
                self.partial = np.zeros_like(self.partial)
                self.count = 0
        rest = values[i:]
        full = rest.shape[0] // bs
        if full:
            self.blocks.extend(rest[: full * bs].reshape(full, bs, -1).mean(axis=1))
        tail = rest[full * bs :]
        if tail.shape[0]:
            self.partial += tail.sum(axis=0)
            self.count += tail.shape[0]

    def array(self, width: int) -> np.ndarray:
        return np.array(self.blocks).reshape(-1, width)


class StatsObserver:
    """Streaming accumulator behind :class:`TrajectoryStats`.

    Receives per-step flux and kinetic records in chunks and keeps only block
    means, so memory does not grow with run length beyond one row per block.
    """

    needs_kinetic = True

    def __init__(self, config: ChainConfig, dt: float, burn_in: int, block_size: int, n_batches: int = 32):
        self.config = config
        self.dt = dt
        self.burn_in = burn_in
        self.n_batches = n_batches
        self.temps = config.temperatures
        self._phi = _BlockAccumulator(2, block_size)
        self._kin = _BlockAccumulator(config.n, block_size)
        self.block_size = block_size
        self.W = 0.0
        self.n_samples = 0

    def update(self, step0: int, phi: np.ndarray, kin: np.ndarray | None, heff, state) -> None:
        k = phi.shape[0]
        skip = max(0, min(k, self.burn_in - step0))
        phi = phi[skip:]
        if phi.shape[0] == 0:
            return
        self.n_samples += phi.shape[0]
        sig = phi[:, 0] / self.temps[0] + phi[:, 1] / self.temps[1]
        self.W += float(np.sum(sig)) * self.dt
        self._phi.push(phi)
        if kin is not None:
            self._kin.push(kin[skip:] / self.config.d)

    def result(self, final_state: ChainState | None) -> TrajectoryStats:
        return TrajectoryStats(
            dt=self.dt,
            burn_in=self.burn_in,
            n_samples=self.n_samples,
            block_size=self.block_size,
            temperatures=self.temps,
            blocks_phi=self._phi.array(2),
            blocks_kin=self._kin.array(self.config.n),
            W_final=self.W,
            final_state=final_state,
            n_batches=self.n_batches,
        )


@dataclass
class WObserver:
    """Records ``W`` (from step 0) at the requested step counts."""

    temperatures: np.ndarray
    dt: float
    checkpoints: tuple[int, ...]
    values: dict = field(default_factory=dict)
    _w: float = 0.0
    needs_kinetic = False

    def update(self, step0, phi, kin, heff, state) -> None:
        sig = phi[:, 0] / self.temperatures[0] + phi[:, 1] / self.temperatures[1]
        w = self._w + np.cumsum(sig) * self.dt
        for c in self.checkpoints:
            if step0 < c <= step0 + len(sig):
                self.values[c] = float(w[c - step0 - 1])
            elif c == 0:
                self.values[0] = 0.0
        if len(sig):
            self._w = float(w[-1])
