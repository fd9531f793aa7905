"""Sweep orchestration: convergence studies, critical-threshold runs, output.

Two experiment families are automated here:

* the scaling study ``run_hydro_sweep`` — replicas of the particle system at
  increasing L, each compared against the deterministic density field
  through a family of test functions; the sup (over sampled times and test
  functions) discrepancy per replica is the convergence observable, and its
  per-L median should shrink like L^{-1/2};
* the threshold study ``run_critical_sweep`` — absorption runs seeded with
  a vanishing infected fraction gamma^alpha, whose final susceptible
  fraction concentrates near 1 below beta = 1 and near the root of
  x = e^{beta(x-1)} above it.

Every replica draws its generator from a seed derived deterministically
from (master seed, job position, L, replica index), so sweeps are
reproducible replica-by-replica and streams never collide across jobs.
Results are plain rows; ``write_*`` functions put them on disk with floats
at 17 significant digits, alongside a ``manifest.txt`` that echoes the
configuration (re-runnable as-is) plus realized quantities.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, parse_profile_pair
from .errors import ConfigError, DomainError, IoError
from .grid import MeanField, TorusGrid, build_kernel, parse_kernel_spec
from .meanfield import hat_x_infinity
from .particle import init_exact_counts, init_random, make_rng, run_sampled, run_to_absorption
from .pde import DensityField, integrate_pde

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# seeds and manifests
# ---------------------------------------------------------------------------

def derive_seed(master: int, *key: int) -> int:
    """Deterministic 128-bit replica seed from a master seed and an index key.

    Distinct keys give statistically independent streams; the integer alone
    reproduces the replica's generator via ``make_rng``.
    """
    words = np.random.SeedSequence(master, spawn_key=tuple(key)).generate_state(4)
    return int.from_bytes(b"".join(int(w).to_bytes(4, "little") for w in words),
                          "little")


@dataclass
class RunManifest:
    """Key-value run record; the ``config.*`` echo alone reproduces the run."""

    command: str
    config: ExperimentConfig
    extra: dict[str, str] = field(default_factory=dict)
    wall_seconds: Optional[float] = None

    def items(self) -> dict[str, str]:
        out = {
            "manifest_version": "1",
            "package_version": __version__,
            "command": self.command,
        }
        if self.wall_seconds is not None:
            out["wall_seconds"] = "%.3f" % self.wall_seconds
        for key, value in self.config.as_items().items():
            out[f"config.{key}"] = value
        out.update(self.extra)
        return out

    def render(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items().items())


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """CSV writer with deterministic float text (17 significant digits)."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(FLOAT_FMT % cell)
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def write_manifest(path: Path, manifest: RunManifest) -> None:
    _write_text(path, manifest.render())


# ---------------------------------------------------------------------------
# linearized early-time benchmark
# ---------------------------------------------------------------------------

class LinearizedTrajectory:
    """Closed-form small-infection approximation with growth rate beta - 1.

    y(t) = gamma^alpha e^{(beta-1)t} and the matching x(t) integrate the
    constant-susceptible-density approximation of the dynamics; t_c is the
    time at which the approximated infected mass reaches order one.
    """

    def __init__(self, beta: float, alpha: float, gamma: float):
        if beta == 1.0:
            raise DomainError("linearized trajectory undefined at beta = 1")
        if not 0 < gamma <= 1:
            raise DomainError(f"gamma must be in (0, 1], got {gamma}")
        if alpha <= 0:
            raise DomainError(f"alpha must be positive, got {alpha}")
        self.beta = float(beta)
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.seed_fraction = gamma ** alpha
        self.t_c = alpha / (beta - 1.0) * math.log(1.0 / gamma)

    def y(self, t):
        return self.seed_fraction * np.exp((self.beta - 1.0) * np.asarray(t, dtype=float))

    def x(self, t):
        growth = np.exp((self.beta - 1.0) * np.asarray(t, dtype=float))
        b = self.beta
        return 1.0 - b / (b - 1.0) * self.seed_fraction * growth \
            + self.seed_fraction / (b - 1.0)


def linearized_trajectory(beta: float, alpha: float, gamma: float, t):
    """Evaluate the linearized pair at time(s) t; returns (x, y, t_c)."""
    lin = LinearizedTrajectory(beta, alpha, gamma)
    return lin.x(t), lin.y(t), lin.t_c


# ---------------------------------------------------------------------------
# test functions for the convergence observable
# ---------------------------------------------------------------------------

def build_test_functions(grid: TorusGrid, spec: str) -> np.ndarray:
    """(n_funcs, n_sites) matrix of observables from a token list.

    Tokens: ``one`` | ``cos:<k>`` | ``sin:<k>``; the oscillatory tokens
    expand to one function per axis with frequency k (macroscopic
    coordinate, so ``cos:1`` is cos(2 pi r_axis)).
    """
    coords = grid.positions()  # (n_sites, d), macroscopic in [0, 1)
    funcs = []
    for token in (t.strip() for t in spec.split(",")):
        if not token:
            continue
        if token == "one":
            funcs.append(np.ones(grid.n_sites))
            continue
        head, _, freq_text = token.partition(":")
        if head not in ("cos", "sin") or not freq_text:
            raise ConfigError(
                f"test_functions: expected one | cos:<k> | sin:<k>, got {token!r}")
        try:
            freq = float(freq_text)
        except ValueError:
            raise ConfigError(f"test_functions: bad frequency in {token!r}") from None
        wave = np.cos if head == "cos" else np.sin
        for axis in range(grid.d):
            funcs.append(wave(2.0 * np.pi * freq * coords[:, axis]))
    if not funcs:
        raise ConfigError("test_functions: empty set")
    return np.stack(funcs)


# ---------------------------------------------------------------------------
# hydrodynamic-convergence sweep
# ---------------------------------------------------------------------------

@dataclass
class HydroResult:
    """Per-replica sup-discrepancies plus per-L medians and the fitted slope."""

    rows: list[tuple]              # (L, gamma, replica, err_i0, err_i1)
    summary: list[tuple]           # (L, gamma, median/q25/q75 for i0 and i1)
    medians: dict[int, float]      # L -> median over replicas of max(err_i0, err_i1)
    slope: float                   # log-log fit of the combined medians vs L


def run_hydro_sweep(config: ExperimentConfig) -> HydroResult:
    """Compare particle replicas against the density field across L values.

    For each L: build the kernel, evaluate the initial profiles, solve the
    deterministic field once, then per replica pair the empirical state
    with each test function at the sampled times. The per-replica error is
    the max discrepancy over times and functions, reported separately for
    the susceptible (i0) and infected (i1) components.
    """
    kernel_spec = parse_kernel_spec(config.kernel)
    sample_times = np.linspace(0.0, config.t_end, config.samples)
    rows = []
    summary = []
    medians: dict[int, float] = {}
    for L in config.L_values:
        grid = TorusGrid(config.d, L)
        kernel = build_kernel(grid, kernel_spec)
        rho0, rho1 = parse_profile_pair(grid, config.rho0, config.rho1)
        test_funcs = build_test_functions(grid, config.test_functions)
        vol = grid.cell_volume()

        run = integrate_pde(kernel, config.beta, DensityField(grid, rho0, rho1),
                            sample_times, dt=config.dt)
        # Riemann pairings of the deterministic field, (n_times, 2, n_funcs)
        pde_pairings = vol * np.stack(
            [np.stack([run.u0[k].ravel() @ test_funcs.T,
                       run.u1[k].ravel() @ test_funcs.T])
             for k in range(len(sample_times))])

        errs = np.empty((config.replicas, 2))
        for replica in range(config.replicas):
            seed = derive_seed(config.seed, L, replica)
            state = init_random(kernel, config.beta, rho0.ravel(), rho1.ravel(),
                                make_rng(seed))
            samples = run_sampled(state, sample_times, test_funcs)
            emp = np.stack([s.averages for s in samples])
            errs[replica] = np.abs(emp - pde_pairings).max(axis=(0, 2))
            rows.append((L, grid.gamma, replica,
                         float(errs[replica, 0]), float(errs[replica, 1])))
        q25_0, med0, q75_0 = np.quantile(errs[:, 0], (0.25, 0.5, 0.75))
        q25_1, med1, q75_1 = np.quantile(errs[:, 1], (0.25, 0.5, 0.75))
        summary.append((L, grid.gamma, float(med0), float(q25_0), float(q75_0),
                        float(med1), float(q25_1), float(q75_1)))
        medians[L] = float(np.median(errs.max(axis=1)))

    slope = float("nan")
    if len(config.L_values) >= 2:
        xs = np.log(np.asarray(config.L_values, dtype=float))
        ys = np.log(np.asarray([medians[L] for L in config.L_values]))
        slope = float(np.polyfit(xs, ys, 1)[0])
    return HydroResult(rows, summary, medians, slope)


def write_hydro_outputs(result: HydroResult, manifest: RunManifest,
                        out_dir) -> list[Path]:
    out = Path(out_dir)
    per_replica = out / "hydro_convergence.csv"
    write_csv(per_replica, ["L", "gamma", "replica", "err_i0", "err_i1"],
              result.rows)
    summary = out / "hydro_summary.csv"
    write_csv(summary,
              ["L", "gamma", "median_err_i0", "q25_err_i0", "q75_err_i0",
               "median_err_i1", "q25_err_i1", "q75_err_i1"],
              result.summary)
    manifest.extra["realized.loglog_slope"] = FLOAT_FMT % result.slope
    manifest_path = out / "manifest.txt"
    write_manifest(manifest_path, manifest)
    return [per_replica, summary, manifest_path]


# ---------------------------------------------------------------------------
# critical-threshold sweep
# ---------------------------------------------------------------------------

@dataclass
class CriticalResult:
    """Absorption outcomes per (beta, L, replica) and their aggregates."""

    rows: list[tuple]     # (beta, alpha, L, replica, seed, x_inf, target)
    summary: list[tuple]  # (beta, alpha, L, n_infected, median, mean, std, target)
    realized: dict[int, int]  # L -> initial infected count


def seeded_infected_count(L: int, d: int, alpha: float) -> int:
    """Nearest integer to gamma^alpha * L^d sites (gamma = 1/L)."""
    return round(L ** (d - alpha))


def run_critical_sweep(config: ExperimentConfig) -> CriticalResult:
    """Final susceptible fractions under vanishing seeding, across beta and L.

    Initial states carry exactly round(gamma^alpha L^d) infected sites and
    no removed sites. The theoretical target column is 1 for beta <= 1 and
    the first positive root of x = e^{beta(x-1)} above threshold.
    """
    alpha = config.require_alpha_critical()
    spec = parse_kernel_spec(config.kernel)
    if not isinstance(spec, MeanField):
        raise ConfigError(
            f"critical sweeps are defined for the meanfield kernel, got {config.kernel!r}")
    rows = []
    summary = []
    realized: dict[int, int] = {}
    for beta_idx, beta in enumerate(config.betas):
        target = hat_x_infinity(beta).value
        for L in config.L_values:
            grid = TorusGrid(config.d, L)
            kernel = build_kernel(grid, spec)
            n_inf = seeded_infected_count(L, config.d, alpha)
            if not 0 < n_inf <= grid.n_sites:
                raise ConfigError(
                    f"alpha = {alpha} gives {n_inf} initial infected at L = {L}")
            n_sus = grid.n_sites - n_inf
            realized[L] = n_inf
            finals = np.empty(config.replicas)
            for replica in range(config.replicas):
                seed = derive_seed(config.seed, beta_idx, L, replica)
                state = init_exact_counts(kernel, beta, n_sus, n_inf, make_rng(seed))
                final = run_to_absorption(state)
                finals[replica] = final.x_inf
                rows.append((beta, alpha, L, replica, seed, final.x_inf, target))
            std = float(finals.std(ddof=1)) if config.replicas > 1 else 0.0
            summary.append((beta, alpha, L, n_inf, float(np.median(finals)),
                            float(finals.mean()), std, target))
    return CriticalResult(rows, summary, realized)


def write_critical_outputs(result: CriticalResult, manifest: RunManifest,
                           out_dir) -> list[Path]:
    out = Path(out_dir)
    per_replica = out / "critical.csv"
    write_csv(per_replica,
              ["beta", "alpha", "L", "replica", "seed", "x_inf", "target"],
              result.rows)
    summary = out / "critical_summary.csv"
    write_csv(summary,
              ["beta", "alpha", "L", "n_infected", "median_x_inf",
               "mean_x_inf", "std_x_inf", "target"],
              result.summary)
    for L, n_inf in sorted(result.realized.items()):
        manifest.extra[f"realized.L{L}.n_infected"] = str(n_inf)
        manifest.extra[f"realized.L{L}.fraction"] = FLOAT_FMT % (n_inf / L ** manifest.config.d)
    manifest_path = out / "manifest.txt"
    write_manifest(manifest_path, manifest)
    return [per_replica, summary, manifest_path]


# ---------------------------------------------------------------------------
# single-model runs used by the command layer
# ---------------------------------------------------------------------------

@dataclass
class SimulationOutput:
    trajectories: list[list]   # per replica: list of TrajectorySample
    finals: list[tuple]        # (replica, seed, x_inf, events, wall_ms)


def run_simulation(config: ExperimentConfig) -> SimulationOutput:
    """Replicated trajectory + absorption runs from one configuration."""
    grid = TorusGrid(config.d, config.L)
    kernel = build_kernel(grid, parse_kernel_spec(config.kernel))
    sample_times = np.linspace(0.0, config.t_end, config.samples)
    trajectories = []
    finals = []
    for replica in range(config.replicas):
        seed = derive_seed(config.seed, config.L, replica)
        rng = make_rng(seed)
        start = time.perf_counter()
        if config.init == "random":
            rho0, rho1 = parse_profile_pair(grid, config.rho0, config.rho1)
            state = init_random(kernel, config.beta, rho0.ravel(), rho1.ravel(), rng)
        elif config.init.startswith("exact:"):
            parts = config.init[len("exact:"):].split(",")
            if len(parts) != 2:
                raise ConfigError(f"init: expected exact:<n_sus>,<n_inf>, got {config.init!r}")
            try:
                n_sus, n_inf = int(parts[0]), int(parts[1])
            except ValueError:
                raise ConfigError(f"init: bad counts in {config.init!r}") from None
            state = init_exact_counts(kernel, config.beta, n_sus, n_inf, rng)
        else:
            raise ConfigError(
                f"init: expected random | exact:<n_sus>,<n_inf>, got {config.init!r}")
        trajectories.append(run_sampled(state, sample_times))
        if state.n_inf > 0:
            run_to_absorption(state)
        x_inf = state.n_sus / grid.n_sites
        wall_ms = (time.perf_counter() - start) * 1e3
        finals.append((replica, seed, x_inf, state.events, wall_ms))
    return SimulationOutput(trajectories, finals)
