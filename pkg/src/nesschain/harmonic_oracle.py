"""Exact linear theory for harmonic chains and 1-site Gibbs quadrature.

With quadratic potentials the (q, p, s) process is Ornstein-Uhlenbeck,
``dx = A x dt + B dw``, and its stationary covariance solves the Lyapunov
equation ``A S + S A^T + B B^T = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import ChainConfig, ConfigError, effective_hessian, effective_potential

__all__ = [
    "LinearSystem",
    "StationaryCovariance",
    "NotStableError",
    "linearize",
    "solve_lyapunov",
    "exact_mean_flux",
    "exact_kinetic_temperatures",
    "gibbs_covariance",
    "spectral_abscissa",
    "gibbs_quadrature_1site",
]

HURWITZ_TOL = 1e-10


class NotStableError(ValueError):
    """Drift matrix is not Hurwitz, so no stationary Gaussian state exists."""


@dataclass(frozen=True)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    n: int
    d: int

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def blocks(self):
        nd = self.n * self.d
        return slice(0, nd), slice(nd, 2 * nd), slice(2 * nd, 2 * nd + 2 * self.d)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    def is_hurwitz(self) -> bool:
        return bool(self.eigenvalues().real.max() < -HURWITZ_TOL)


@dataclass(frozen=True)
class StationaryCovariance:
    sigma: np.ndarray
    system: LinearSystem

    def residual(self) -> float:
        A, B, S = self.system.A, self.system.B, self.sigma
        return float(np.abs(A @ S + S @ A.T + B @ B.T).max())

    def block(self, a: str, b: str) -> np.ndarray:
        sl = dict(zip("qps", self.system.blocks()))
        return self.sigma[sl[a], sl[b]]


def linearize(config: ChainConfig) -> LinearSystem:
    """Drift and noise matrices over ``x = (q, p, s)``."""
    if not config.is_harmonic:
        raise ConfigError(["linearize needs purely quadratic on-site and interaction potentials"])
    n, d = config.n, config.d
    nd = n * d
    m = 2 * nd + 2 * d
    q, p, s = slice(0, nd), slice(nd, 2 * nd), slice(2 * nd, m)
    A = np.zeros((m, m))
    A[q, p] = np.eye(nd)
    A[p, q] = -effective_hessian(config)
    lam, gam, T = config.lams, config.gammas, config.temperatures
    coup = np.zeros((nd, 2 * d))  # dp_b += lam sqrt(gamma) s
    back = np.zeros((2 * d, nd))  # ds += -lam / sqrt(gamma) p_b
    for i, site in enumerate((0, n - 1)):
        for a in range(d):
            coup[site * d + a, i * d + a] += lam[i] * np.sqrt(gam[i])
            back[i * d + a, site * d + a] += lam[i] / np.sqrt(gam[i])
    A[p, s] = coup
    A[s, p] = -back
    A[s, s] = -np.diag(np.repeat(gam, d))
    B = np.zeros((m, 2 * d))
    B[s, :] = -np.diag(np.repeat(np.sqrt(2.0 * T), d))
    return LinearSystem(A, B, n, d)


def spectral_abscissa(system: LinearSystem) -> float:
    """Largest real part of the drift spectrum (negative when stable)."""
    return float(system.eigenvalues().real.max())


def solve_lyapunov(system: LinearSystem) -> StationaryCovariance:
    """Dense Kronecker-form solve of ``A S + S A^T + B B^T = 0``."""
    if not system.is_hurwitz():
        raise NotStableError(
            f"drift matrix not Hurwitz (spectral abscissa {spectral_abscissa(system):.3e}); no stationary state"
        )
    A = system.A
    m = A.shape[0]
    eye = np.eye(m)
    # row-major vec: vec(A S) = (A kron I) vec S, vec(S A^T) = (I kron A) vec S
    op = np.kron(A, eye) + np.kron(eye, A)
    rhs = -(system.B @ system.B.T).ravel()
    S = np.linalg.solve(op, rhs).reshape(m, m)
    S = 0.5 * (S + S.T)
    return StationaryCovariance(S, system)


def exact_mean_flux(config: ChainConfig) -> tuple[float, float, float]:
    """Stationary (<phi_L>, <phi_R>, <sigma>) of a harmonic chain."""
    cov = solve_lyapunov(linearize(config))
    ps = cov.block("p", "s")
    d, n = config.d, config.n
    out = []
    for i, site in enumerate((0, n - 1)):
        res = config.reservoirs[i]
        tr = sum(ps[site * d + a, i * d + a] for a in range(d))
        out.append(res.lam * np.sqrt(res.gamma) * tr)
    phi_l, phi_r = out
    sigma = phi_l / config.left.temperature + phi_r / config.right.temperature
    return float(phi_l), float(phi_r), float(sigma)


def exact_kinetic_temperatures(config: ChainConfig) -> np.ndarray:
    """Per-site ``<|p_j|^2>/d`` from the Lyapunov solution."""
    pp = np.diag(solve_lyapunov(linearize(config)).block("p", "p"))
    return pp.reshape(config.n, config.d).mean(axis=1)


def gibbs_covariance(config: ChainConfig, temperature: float) -> np.ndarray:
    """``T * Hess(G)^{-1}``: the equal-temperature Gaussian covariance."""
    hess = np.zeros((config.phase_dim, config.phase_dim))
    nd = config.n * config.d
    hess[:nd, :nd] = effective_hessian(config)
    hess[nd : 2 * nd, nd : 2 * nd] = np.eye(nd)
    hess[2 * nd :, 2 * nd :] = np.diag(np.repeat(config.gammas, config.d))
    return temperature * np.linalg.inv(hess)


def gibbs_quadrature_1site(config: ChainConfig, temperature: float, tol: float = 1e-12) -> dict[str, float]:
    """Moments of the single-site Gibbs law ``exp(-V_eff/T)`` by radial quadrature.

    Returns ``q2 = <|q|^2>``, ``q4 = <|q|^4>`` and ``p2 = <|p|^2> = d T``.
    """
    if config.n != 1:
        raise ConfigError(["gibbs_quadrature_1site needs n = 1"])
    d, T = config.d, float(temperature)

    def v(r):
        x = np.zeros(d)
        x[0] = r
        return effective_potential(config, x)

    # shift by the minimum so the weights stay O(1)
    grid = np.linspace(0.0, 50.0, 20001)
    vmin = min(v(r) for r in grid[::100])

    def weight(r, k):
        return r ** (d - 1 + k) * np.exp(-(v(r) - vmin) / T)

    # cutoff where the Boltzmann factor is below 1e-300
    rmax = next((r for r in grid[1:] if (v(r) - vmin) / T > 700.0), grid[-1])
    vals = []
    for k in (0, 2, 4):
        val, err = integrate.quad(weight, 0.0, rmax, args=(k,), epsabs=tol, epsrel=tol, limit=500)
        if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
            raise RuntimeError(f"quadrature did not converge (moment {k}, error estimate {err:.2e})")
        vals.append(val)
    z = vals[0]
    return {"q2": vals[1] / z, "q4": vals[2] / z, "p2": d * T}
