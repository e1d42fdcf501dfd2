"""Command-line driver: flat ``key = value`` configs in, CSV files out.

Exit codes: 0 success, 1 configuration error, 2 numerical blow-up.  A CSV
cut short by a blow-up ends with the trailer row ``# INCOMPLETE``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .dynamics import BlowUpError, IntegratorSpec, chain_noise, simulate, synchronous_pair
from .fluctuation import EnsembleSpec, gc_symmetry_test
from .harmonic_oracle import exact_kinetic_temperatures, exact_mean_flux, spectral_abscissa, linearize
from .model import ChainConfig, ChainState, ConfigError, PolynomialPotential, ReservoirSpec, validate_config
from .spde_gl import GLBlowUpError, GLSpec, gl_synchronization_test, random_gl_state

log = logging.getLogger("nesschain")

EXPERIMENTS = ("simulate", "flux", "gc-test", "oracle", "converge", "gl")
INCOMPLETE = "# INCOMPLETE"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "simulate"
    # chain
    n: int = 3
    d: int = 1
    onsite_quadratic: float = 0.5
    onsite_quartic: float = 0.25
    interaction_quadratic: float = 0.5
    interaction_quartic: float = 0.25
    lambda_L: float = 0.5
    lambda_R: float = 0.5
    gamma_L: float = 1.0
    gamma_R: float = 1.0
    T_L: float = 2.0
    T_R: float = 1.0
    # integration
    scheme: str = "splitting"
    dt: float = 1e-3
    steps: int = 100_000
    burn_in_fraction: float = 0.1
    n_batches: int = 32
    record_every: int = 100
    # gc-test
    ensemble_size: int = 4000
    horizon: float = 200.0
    ensemble_burn_in: float = 200.0
    n_boot: int = 1000
    # gl
    gl_L: float = 10.0
    gl_K: int = 32
    gl_k_star: int = 3
    gl_noise_scale: float = 0.0  # 0 selects the unit first-forced-mode normalisation
    gl_dt: float = 0.01
    gl_steps: int = 30_000
    # run
    seed: int = 0

    def chain(self) -> ChainConfig:
        def pot(a2, a4):
            return PolynomialPotential(tuple((e, a) for e, a in ((2, a2), (4, a4)) if a != 0.0))

        return ChainConfig(
            n=self.n,
            d=self.d,
            onsite=pot(self.onsite_quadratic, self.onsite_quartic),
            interaction=pot(self.interaction_quadratic, self.interaction_quartic),
            left=ReservoirSpec(self.lambda_L, self.gamma_L, self.T_L),
            right=ReservoirSpec(self.lambda_R, self.gamma_R, self.T_R),
        )

    def integrator(self) -> IntegratorSpec:
        return IntegratorSpec(scheme=self.scheme, dt=self.dt)

    def gl(self) -> GLSpec:
        scale = self.gl_noise_scale if self.gl_noise_scale > 0 else None
        return GLSpec(L=self.gl_L, K=self.gl_K, k_star=self.gl_k_star, noise_scale=scale, dt=self.gl_dt, seed=self.seed)

    def echo(self) -> str:
        """Effective configuration in the input format; re-parses to ``self``."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(name: str, raw: str):
    kind = type(getattr(ExperimentConfig, name))
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            f = float(raw)
            if f.is_integer():
                return int(f)
            raise
    if kind is float:
        return float(raw)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) and validate.

    Raises :class:`ConfigError` listing every problem with its line number.
    """
    values: dict = {}
    where: dict[str, int] = {}
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in _FIELDS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            kind = type(getattr(ExperimentConfig, key)).__name__
            errors.append(f"line {lineno}: {key} expects {kind}, got {raw!r}")
            continue
        where[key] = lineno
    if errors:
        raise ConfigError(errors)
    cfg = ExperimentConfig(**values)
    problems = _validate(cfg)
    if problems:
        raise ConfigError([_locate(msg, keys, where) for msg, keys in problems])
    return cfg


def _locate(msg: str, keys: tuple[str, ...], where: dict[str, int]) -> str:
    lines = sorted(where[k] for k in keys if k in where)
    return f"line {lines[0]}: {msg}" if lines else f"(defaults): {msg}"


_BATH_KEYS = {"lam": "lambda", "gamma": "gamma", "temperature": "T"}


def _chain_keys(msg: str) -> tuple[str, ...]:
    head = msg.split(" ", 1)[0].rstrip(":")
    if head in ("n", "d"):
        return (head,)
    if head in ("onsite", "interaction"):
        return (f"{head}_quadratic", f"{head}_quartic")
    if "." in head:
        side, attr = head.split(".")
        return (f"{_BATH_KEYS[attr]}_{side[0].upper()}",)
    return ("onsite_quadratic", "onsite_quartic", "interaction_quadratic", "interaction_quartic")


def _validate(cfg: ExperimentConfig) -> list[tuple[str, tuple[str, ...]]]:
    out = []
    if cfg.experiment not in EXPERIMENTS:
        out.append((f"experiment must be one of {', '.join(EXPERIMENTS)} (got {cfg.experiment!r})", ("experiment",)))
    try:
        validate_config(cfg.chain())
    except ConfigError as exc:
        out.extend((v, _chain_keys(v)) for v in exc.violations)
    try:
        cfg.integrator()
    except ValueError as exc:
        out.append((str(exc), ("scheme", "dt")))
    checks = [
        (cfg.steps >= 0, "steps must be >= 0", ("steps",)),
        (0.0 <= cfg.burn_in_fraction < 1.0, "burn_in_fraction must be in [0, 1)", ("burn_in_fraction",)),
        (cfg.n_batches >= 2, "n_batches must be >= 2", ("n_batches",)),
        (cfg.record_every >= 1, "record_every must be >= 1", ("record_every",)),
        (cfg.ensemble_size >= 2, "ensemble_size must be >= 2", ("ensemble_size",)),
        (cfg.horizon > 0, "horizon must be > 0", ("horizon",)),
        (cfg.ensemble_burn_in >= 0, "ensemble_burn_in must be >= 0", ("ensemble_burn_in",)),
        (cfg.n_boot >= 10, "n_boot must be >= 10", ("n_boot",)),
        (cfg.gl_steps >= 0, "gl_steps must be >= 0", ("gl_steps",)),
        (cfg.gl_noise_scale >= 0, "gl_noise_scale must be >= 0", ("gl_noise_scale",)),
        (cfg.seed >= 0, "seed must be >= 0", ("seed",)),
    ]
    out.extend((msg, keys) for ok, msg, keys in checks if not ok)
    try:
        cfg.gl()
    except ValueError as exc:
        out.append((str(exc), ("gl_L", "gl_K", "gl_k_star", "gl_dt")))
    if cfg.experiment == "oracle" and not cfg.chain().is_harmonic:
        out.append(("oracle needs a harmonic chain (set onsite_quartic = 0 and interaction_quartic = 0)",
                    ("experiment", "onsite_quartic", "interaction_quartic")))
    return out


# ---------------------------------------------------------------- output


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class _Table:
    def __init__(self, path: Path, header: list[str]):
        self.path = path
        self.header = header
        self.rows: list[list] = []

    def add(self, *row) -> None:
        self.rows.append(list(row))

    def write(self, complete: bool = True) -> None:
        with open(self.path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header)
            for row in self.rows:
                w.writerow([_fmt(x) for x in row])
            if not complete:
                fh.write(INCOMPLETE + "\n")


class _SeriesObserver:
    """Instantaneous fluxes and running ``W`` every ``every`` steps."""

    needs_kinetic = False

    def __init__(self, table: _Table, temps: np.ndarray, dt: float, every: int):
        self.table, self.temps, self.dt, self.every = table, temps, dt, every
        self.W = 0.0

    def update(self, step0, phi, kin, heff, state) -> None:
        sig = phi[:, 0] / self.temps[0] + phi[:, 1] / self.temps[1]
        before = self.W + self.dt * (np.cumsum(sig) - sig)  # W accumulated before each step
        first = (-step0) % self.every
        for j in range(first, len(sig), self.every):
            k = step0 + j
            self.table.add(k, k * self.dt, phi[j, 0], phi[j, 1], sig[j], before[j])
        if len(sig):
            self.W = float(before[-1] + self.dt * sig[-1])


def _flux_run(cfg: ExperimentConfig, out: Path, with_profile: bool):
    chain = cfg.chain()
    integ = cfg.integrator()
    series = _Table(out / "flux.csv", ["step", "time", "phi_L", "phi_R", "sigma", "W"])
    obs = _SeriesObserver(series, chain.temperatures, integ.dt, cfg.record_every)
    burn = int(cfg.steps * cfg.burn_in_fraction)
    try:
        stats = simulate(
            chain, integ, ChainState.zeros(chain), cfg.steps, chain_noise(chain, cfg.seed),
            observers=[obs], burn_in=burn, n_batches=cfg.n_batches,
        )
    except BlowUpError:
        series.write(complete=False)
        raise
    series.write()
    if with_profile:
        prof = _Table(out / "profile.csv", ["site", "T_j", "stderr"])
        if stats.n_samples >= 2 * cfg.n_batches:
            T, se = stats.kinetic_temperatures()
            for j in range(chain.n):
                prof.add(j + 1, T[j], se[j])
        prof.write()
    return stats


def run_simulate(cfg, out):
    _flux_run(cfg, out, with_profile=False)


def run_flux(cfg, out):
    stats = _flux_run(cfg, out, with_profile=True)
    if stats.n_samples >= 2 * cfg.n_batches:
        for name in ("phi_left", "phi_right", "phi_total", "sigma"):
            m, se = getattr(stats, name)
            print(f"<{name}> = {m:.6g} +- {se:.3g}")


def run_oracle(cfg, out):
    chain = cfg.chain()
    stats = _flux_run(cfg, out, with_profile=True)
    table = _Table(out / "oracle.csv", ["quantity", "exact", "simulated", "stderr"])
    phi_l, phi_r, sig = exact_mean_flux(chain)
    T_exact = exact_kinetic_temperatures(chain)
    rows = [("phi_L", phi_l, stats.phi_left), ("phi_R", phi_r, stats.phi_right), ("sigma", sig, stats.sigma)]
    T, se = stats.kinetic_temperatures()
    rows += [(f"T_{j + 1}", T_exact[j], (T[j], se[j])) for j in range(chain.n)]
    for name, exact, (sim, err) in rows:
        table.add(name, exact, sim, err)
    table.write()


def run_gc(cfg, out):
    chain = cfg.chain()
    spec = EnsembleSpec(
        n_traj=cfg.ensemble_size, horizon_t=cfg.horizon, burn_in_t=cfg.ensemble_burn_in,
        seed=cfg.seed, n_boot=cfg.n_boot, integrator=cfg.integrator(),
    )
    report = gc_symmetry_test(chain, spec, control=True)
    for suffix, rep in (("", report), ("_control", report.control)):
        g = _Table(out / f"gc{suffix}.csv", ["eta", "e_eta", "ci_lo", "ci_hi"])
        c = rep.cgf_2t
        for i, eta in enumerate(c.eta_grid):
            g.add(eta, c.e_values[i], c.bootstrap_ci[i, 0], c.bootstrap_ci[i, 1])
        g.write()
        r = _Table(out / f"ratetest{suffix}.csv", ["u", "log_ratio", "stderr"])
        if rep.ratio is not None:
            for u, y, se in rep.ratio[2]:
                r.add(u, y, se)
        r.write()
    print(report.summary())
    print("control:")
    print(report.control.summary())


def _random_state(chain: ChainConfig, rng: np.random.Generator, scale: float = 1.0) -> ChainState:
    x = rng.standard_normal(chain.phase_dim) * scale
    return ChainState.from_vector(chain, x)


def run_converge(cfg, out):
    chain = cfg.chain()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    a, b = _random_state(chain, rng), _random_state(chain, rng)
    table = _Table(out / "converge.csv", ["time", "log_distance"])
    times, dist = synchronous_pair(
        chain, cfg.integrator(), a, b, cfg.steps, chain_noise(chain, cfg.seed), cfg.record_every
    )
    for t, x in zip(times, dist):
        table.add(t, np.log(x) if x > 0 else -np.inf)
    table.write()
    if chain.is_harmonic:
        print(f"spectral abscissa = {spectral_abscissa(linearize(chain)):.6g}")


def run_gl(cfg, out):
    spec = cfg.gl()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    a = random_gl_state(spec, rng, amplitude=2.0)
    b = random_gl_state(spec, rng, amplitude=2.0)
    table = _Table(out / "gl.csv", ["time", "distance", "low_mode_energy"])
    res = gl_synchronization_test(spec, a, b, cfg.gl_steps, cfg.record_every)
    for t, x, e in zip(res["time"], res["distance"], res["low_mode_a"]):
        table.add(t, x, e)
    table.write()


_RUNNERS = {
    "simulate": run_simulate,
    "flux": run_flux,
    "oracle": run_oracle,
    "gc-test": run_gc,
    "converge": run_converge,
    "gl": run_gl,
}


def run(cfg: ExperimentConfig, out: Path | str) -> int:
    """Run one experiment into ``out``; returns the exit code."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.echo())
    try:
        _RUNNERS[cfg.experiment](cfg, out)
    except (BlowUpError, GLBlowUpError) as exc:
        log.error("blow-up: %s", exc)
        return 2
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="nesschain", description=__doc__.splitlines()[0])
    parser.add_argument("config", nargs="?", help="key = value file (omit for all defaults)")
    parser.add_argument("--seed", type=int, help="override the seed in the config")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = Path(args.config).read_text() if args.config else ""
        if args.seed is not None:
            text += f"\nseed = {args.seed}\n"
        cfg = parse_config(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 1
    sys.stdout.write(cfg.echo())
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
