"""Chain model: potentials, reservoirs, energies and the bath coordinate change.

A chain of ``n`` oscillators in ``R^d`` with Hamiltonian

    H_S(q, p) = sum_j |p_j|^2 / 2 + sum_j U1(q_j) + sum_i U2(q_i - q_{i+1}),

coupled at site 1 to the left bath and at site n to the right bath.  Each bath
is reduced to a ``d``-dimensional auxiliary variable.  Two equivalent
coordinate systems are supported: the raw bath force ``r`` and the rescaled
variable ``s`` in which the dynamics has the structure of a damped
Hamiltonian system with energy ``G``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "PolynomialPotential",
    "ReservoirSpec",
    "ChainConfig",
    "ChainState",
    "NonConfiningWarning",
    "DegenerateCouplingWarning",
    "fpu_potential",
    "harmonic_potential",
    "validate_config",
    "chain_potential",
    "chain_potential_grad",
    "effective_potential",
    "effective_potential_grad",
    "effective_hamiltonian",
    "energy_G",
    "r_to_s",
    "s_to_r",
    "effective_is_confining",
]


class ConfigError(ValueError):
    """Invalid model or experiment configuration.

    ``violations`` lists every broken invariant, not just the first.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NonConfiningWarning(UserWarning):
    pass


class DegenerateCouplingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PolynomialPotential:
    """Radial even polynomial ``U(x) = sum_k a_k |x|^{e_k}`` on ``R^d``.

    ``terms`` holds ``(exponent, coefficient)`` pairs; exponents are the actual
    powers of ``|x|`` (2, 4, ...), so the FPU-beta potential is
    ``((2, 0.5), (4, 0.25))``.
    """

    terms: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        terms = tuple(sorted((int(e), float(a)) for e, a in self.terms))
        object.__setattr__(self, "terms", terms)

    @property
    def exponents(self) -> np.ndarray:
        return np.array([e for e, _ in self.terms], dtype=np.int64)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([a for _, a in self.terms], dtype=np.float64)

    @property
    def degree(self) -> int:
        nonzero = [e for e, a in self.terms if a != 0.0]
        return max(nonzero) if nonzero else 0

    @property
    def is_quadratic(self) -> bool:
        return all(e == 2 or a == 0.0 for e, a in self.terms)

    def quadratic_coefficient(self) -> float:
        return sum(a for e, a in self.terms if e == 2)

    def problems(self) -> list[str]:
        out = []
        for e, a in self.terms:
            if e < 2 or e % 2:
                out.append(f"exponent {e} must be an even integer >= 2")
            if not np.isfinite(a):
                out.append(f"coefficient for exponent {e} is not finite")
        if self.terms:
            top = max(self.terms)
            if not top[1] > 0.0:
                out.append(f"highest-exponent coefficient must be > 0 (got {top[1]} at exponent {top[0]})")
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on the last axis of ``x`` (shape ``(..., d)``)."""
        r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
        out = np.zeros_like(r2)
        for e, a in self.terms:
            out = out + a * r2 ** (e // 2)
        return out

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x**2, axis=-1, keepdims=True)
        scale = np.zeros_like(r2)
        for e, a in self.terms:
            scale = scale + a * e * r2 ** (e // 2 - 1)
        return scale * x

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """d x d Hessian at a single point ``x``."""
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        r2 = float(x @ x)
        f1 = sum(a * e * r2 ** (e // 2 - 1) for e, a in self.terms)
        f2 = sum(a * e * (e - 2) * r2 ** (e // 2 - 2) for e, a in self.terms if e > 2)
        return f1 * np.eye(d) + f2 * np.outer(x, x)


def harmonic_potential(stiffness: float = 1.0) -> PolynomialPotential:
    return PolynomialPotential(((2, 0.5 * stiffness),))


def fpu_potential(quadratic: float = 0.5, quartic: float = 0.25) -> PolynomialPotential:
    return PolynomialPotential(((2, quadratic), (4, quartic)))


@dataclass(frozen=True)
class ReservoirSpec:
    """One heat bath: coupling ``lam``, memory rate ``gamma``, ``temperature``."""

    lam: float = 0.5
    gamma: float = 1.0
    temperature: float = 1.0

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature


@dataclass(frozen=True)
class ChainConfig:
    n: int = 3
    d: int = 1
    onsite: PolynomialPotential = field(default_factory=fpu_potential)
    interaction: PolynomialPotential = field(default_factory=fpu_potential)
    left: ReservoirSpec = field(default_factory=lambda: ReservoirSpec(temperature=2.0))
    right: ReservoirSpec = field(default_factory=lambda: ReservoirSpec(temperature=1.0))

    @property
    def reservoirs(self) -> tuple[ReservoirSpec, ReservoirSpec]:
        return (self.left, self.right)

    @property
    def boundary_sites(self) -> tuple[int, int]:
        return (0, self.n - 1)

    @property
    def lams(self) -> np.ndarray:
        return np.array([self.left.lam, self.right.lam])

    @property
    def gammas(self) -> np.ndarray:
        return np.array([self.left.gamma, self.right.gamma])

    @property
    def temperatures(self) -> np.ndarray:
        return np.array([self.left.temperature, self.right.temperature])

    @property
    def is_harmonic(self) -> bool:
        return self.onsite.is_quadratic and self.interaction.is_quadratic

    @property
    def phase_dim(self) -> int:
        return (2 * self.n + 2) * self.d


@dataclass
class ChainState:
    """Phase point ``(q, p, s)``; ``q``, ``p`` are ``(n, d)`` and ``s`` is ``(2, d)``.

    Row 0 of ``s`` is the left bath, row 1 the right bath.
    """

    q: np.ndarray
    p: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float, ndmin=2)
        self.p = np.array(self.p, dtype=float, ndmin=2)
        self.s = np.array(self.s, dtype=float, ndmin=2)
        if self.q.shape != self.p.shape:
            raise ValueError(f"q and p shapes differ: {self.q.shape} vs {self.p.shape}")
        if self.s.shape != (2, self.q.shape[1]):
            raise ValueError(f"s must have shape (2, {self.q.shape[1]}), got {self.s.shape}")

    @classmethod
    def zeros(cls, config: ChainConfig) -> "ChainState":
        return cls(np.zeros((config.n, config.d)), np.zeros((config.n, config.d)), np.zeros((2, config.d)))

    @classmethod
    def from_vector(cls, config: ChainConfig, x: np.ndarray) -> "ChainState":
        """Inverse of :meth:`to_vector`, ordering ``(q, p, s)``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (config.phase_dim,):
            raise ValueError(f"expected vector of length {config.phase_dim}, got shape {x.shape}")
        nd = config.n * config.d
        return cls(
            x[:nd].reshape(config.n, config.d),
            x[nd : 2 * nd].reshape(config.n, config.d),
            x[2 * nd :].reshape(2, config.d),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.q.ravel(), self.p.ravel(), self.s.ravel()])

    def copy(self) -> "ChainState":
        return ChainState(self.q.copy(), self.p.copy(), self.s.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.s)))


def validate_config(config: ChainConfig) -> ChainConfig:
    """Return ``config`` unchanged if valid, else raise :class:`ConfigError`.

    All violations are collected.  A non-confining effective potential and a
    coupling without a quadratic term are only warned about.
    """
    bad: list[str] = []
    if not isinstance(config.n, (int, np.integer)) or config.n < 1:
        bad.append(f"n must be an integer >= 1 (got {config.n!r})")
    if not isinstance(config.d, (int, np.integer)) or config.d < 1:
        bad.append(f"d must be an integer >= 1 (got {config.d!r})")
    bad += [f"onsite: {m}" for m in config.onsite.problems()]
    bad += [f"interaction: {m}" for m in config.interaction.problems()]
    m1, m2 = config.onsite.degree, config.interaction.degree
    if m1 < 2:
        bad.append("onsite: potential needs a positive term of exponent >= 2 (m_1 >= 2)")
    if isinstance(config.n, (int, np.integer)) and config.n > 1:
        if m2 < 2:
            bad.append("interaction: bonds need a nonzero term of exponent >= 2")
        elif m2 < m1:
            bad.append(
                f"interaction degree m_2={m2} is below onsite degree m_1={m1}; "
                "energy can pile up on single sites (breathers), require m_2 >= m_1"
            )
    for name, res in (("left", config.left), ("right", config.right)):
        for attr in ("lam", "gamma", "temperature"):
            val = getattr(res, attr)
            if not (np.isfinite(val) and val > 0):
                bad.append(f"{name}.{attr} must be > 0 (got {val})")
    if bad:
        raise ConfigError(bad)

    if config.n > 1 and config.interaction.quadratic_coefficient() == 0.0:
        warnings.warn(
            "interaction has no quadratic term; bond Hessian is singular at zero extension",
            DegenerateCouplingWarning,
            stacklevel=2,
        )
    if not effective_is_confining(config):
        warnings.warn(
            "effective potential is not confining for these bath couplings; expect blow-up",
            NonConfiningWarning,
            stacklevel=2,
        )
    return config


def _as_positions(config: ChainConfig, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape == (config.n * config.d,):
        return q.reshape(config.n, config.d)
    if q.shape[-2:] != (config.n, config.d):
        raise ValueError(f"positions must have {config.n * config.d} entries, got shape {q.shape}")
    return q


def chain_potential(config: ChainConfig, q) -> np.ndarray | float:
    """V(q); accepts flat ``(n*d,)`` or ``(..., n, d)`` positions."""
    q = _as_positions(config, q)
    v = np.sum(config.onsite(q), axis=-1)
    if config.n > 1:
        v = v + np.sum(config.interaction(q[..., :-1, :] - q[..., 1:, :]), axis=-1)
    return v if np.ndim(v) else float(v)


def chain_potential_grad(config: ChainConfig, q) -> np.ndarray:
    """Analytic gradient of :func:`chain_potential`, same shape as the input."""
    shape = np.shape(q)
    q = _as_positions(config, q)
    g = config.onsite.grad(q)
    if config.n > 1:
        b = config.interaction.grad(q[..., :-1, :] - q[..., 1:, :])
        g[..., :-1, :] += b
        g[..., 1:, :] -= b
    return g.reshape(shape)


def _boundary_quadratic(config: ChainConfig, q: np.ndarray) -> np.ndarray:
    return 0.5 * (
        config.left.lam**2 * np.sum(q[..., 0, :] ** 2, axis=-1)
        + config.right.lam**2 * np.sum(q[..., -1, :] ** 2, axis=-1)
    )


def effective_potential(config: ChainConfig, q) -> np.ndarray | float:
    """V_eff(q) = V(q) - (lam_L^2 |q_1|^2 + lam_R^2 |q_n|^2) / 2."""
    q = _as_positions(config, q)
    v = chain_potential(config, q) - _boundary_quadratic(config, q)
    return v if np.ndim(v) else float(v)


def effective_potential_grad(config: ChainConfig, q) -> np.ndarray:
    shape = np.shape(q)
    q = _as_positions(config, q)
    g = chain_potential_grad(config, q).copy()
    g[..., 0, :] -= config.left.lam**2 * q[..., 0, :]
    g[..., -1, :] -= config.right.lam**2 * q[..., -1, :]
    return g.reshape(shape)


def effective_hamiltonian(config: ChainConfig, state: ChainState) -> float:
    """H_eff = |p|^2/2 + V_eff(q); its generator image is the total flux."""
    return 0.5 * float(np.sum(state.p**2)) + effective_potential(config, state.q)


def energy_G(config: ChainConfig, state: ChainState) -> float:
    """G = |p|^2/2 + V_eff(q) + s.Gamma s / 2."""
    if not state.is_finite():
        raise ValueError("state contains non-finite entries")
    bath = 0.5 * float(np.sum(config.gammas[:, None] * state.s**2))
    return effective_hamiltonian(config, state) + bath


def _check_invertible(config: ChainConfig) -> None:
    if config.left.lam == 0 or config.right.lam == 0 or config.left.gamma <= 0 or config.right.gamma <= 0:
        raise ConfigError(["coordinate map needs lam != 0 and gamma > 0 on both baths"])


def _boundary_positions(config: ChainConfig, q) -> np.ndarray:
    q = _as_positions(config, q)
    return np.stack([q[..., 0, :], q[..., -1, :]], axis=-2)


def r_to_s(config: ChainConfig, r, q) -> np.ndarray:
    """Map raw bath forces ``r`` (shape ``(2, d)``) to effective coordinates.

    Per bath: ``s = r / (lam sqrt(gamma)) - lam q_b / sqrt(gamma)``.
    """
    _check_invertible(config)
    lam = config.lams[:, None]
    rg = np.sqrt(config.gammas)[:, None]
    r = np.asarray(r, dtype=float)
    return r / (lam * rg) - lam * _boundary_positions(config, q) / rg


def s_to_r(config: ChainConfig, s, q) -> np.ndarray:
    """Inverse of :func:`r_to_s`: ``r = lam sqrt(gamma) s + lam^2 q_b``."""
    _check_invertible(config)
    lam = config.lams[:, None]
    rg = np.sqrt(config.gammas)[:, None]
    s = np.asarray(s, dtype=float)
    return lam * rg * s + lam**2 * _boundary_positions(config, q)


def effective_is_confining(config: ChainConfig) -> bool:
    """Whether V_eff grows to +inf in every direction.

    A super-quadratic on-site term dominates the boundary renormalisation;
    otherwise the quadratic part of V_eff must be positive definite.
    """
    if config.onsite.degree > 2:
        return True
    hq = quadratic_hessian(config) - np.diag(_boundary_diag(config))
    return bool(np.linalg.eigvalsh(hq).min() > 0)


def _boundary_diag(config: ChainConfig) -> np.ndarray:
    diag = np.zeros((config.n, config.d))
    diag[0] += config.left.lam**2
    diag[-1] += config.right.lam**2
    return diag.ravel()


def quadratic_hessian(config: ChainConfig) -> np.ndarray:
    """Hessian of the exponent-2 part of V (exact Hessian for harmonic chains)."""
    n, d = config.n, config.d
    k1 = 2.0 * config.onsite.quadratic_coefficient()
    k2 = 2.0 * config.interaction.quadratic_coefficient()
    lap = np.zeros((n, n))
    for i in range(n - 1):
        lap[i, i] += k2
        lap[i + 1, i + 1] += k2
        lap[i, i + 1] -= k2
        lap[i + 1, i] -= k2
    return np.kron(k1 * np.eye(n) + lap, np.eye(d))


def effective_hessian(config: ChainConfig) -> np.ndarray:
    return quadratic_hessian(config) - np.diag(_boundary_diag(config))
