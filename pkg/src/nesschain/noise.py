"""Reproducible Gaussian increments keyed by (master_seed, stream_index, step).

Each stream owns a Philox key derived from its seed pair; the Philox counter
is the step index times a fixed per-step block count.  Step ``k`` therefore
always sees the same numbers no matter how a run is chunked or which worker
generates it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseStream"]

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _uniform_open(raw: np.ndarray) -> np.ndarray:
    # 53-bit uniforms on (0, 1]; never 0 so log() below is safe
    return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53


@dataclass(frozen=True)
class NoiseStream:
    """Standard normals of fixed ``width`` per step.

    Parameters
    ----------
    master_seed : int
        Experiment-wide seed (64-bit).
    stream_index : int
        Trajectory id; distinct ids give independent streams.
    width : int
        Number of independent Gaussians consumed per step.
    """

    master_seed: int
    stream_index: int = 0
    width: int = 2

    @property
    def key(self) -> np.ndarray:
        ss = np.random.SeedSequence([int(self.master_seed) & 0xFFFFFFFFFFFFFFFF, int(self.stream_index)])
        return ss.generate_state(2, dtype=np.uint64)

    @property
    def blocks_per_step(self) -> int:
        # Box-Muller needs one raw word per output; Philox4x64 yields 4 per block
        return (self.width + (self.width % 2) + 3) // 4

    def increments(self, start: int, n_steps: int) -> np.ndarray:
        """Normals for steps ``start .. start+n_steps-1``, shape ``(n_steps, width)``."""
        if n_steps <= 0:
            return np.zeros((0, self.width))
        bps = self.blocks_per_step
        counter = np.zeros(4, dtype=np.uint64)
        c0 = int(start) * bps
        counter[0] = c0 & 0xFFFFFFFFFFFFFFFF
        counter[1] = c0 >> 64
        bg = np.random.Philox(counter=counter, key=self.key)
        raw = bg.random_raw(n_steps * bps * 4).reshape(n_steps, bps * 4)
        m = (self.width + 1) // 2
        u1 = _uniform_open(raw[:, :m])
        u2 = _uniform_open(raw[:, m : 2 * m])
        rad = np.sqrt(-2.0 * np.log(u1))
        z = np.empty((n_steps, 2 * m))
        z[:, 0::2] = rad * np.cos(_TWO_PI * u2)
        z[:, 1::2] = rad * np.sin(_TWO_PI * u2)
        return z[:, : self.width]
