"""Command line runner: simulate, freewave, channels, identities, mellin, report.

Runs are driven by a config file (see the config module for the format) or
a named built-in preset.  Each run writes its artifacts into an output
directory: one CSV per snapshot, one CSV and verdict JSON per observable,
channel tables when requested, and a MANIFEST.json carrying the config
hash and library versions.  Exit codes: 0 success, 2 validation failure,
3 numerical abort, 4 I/O failure.
"""

from __future__ import annotations

import importlib.resources
import sys
from pathlib import Path

import click
import numpy as np

from .channels import ChannelError, decompose, extract_free_channel, wls_diagnostics
from .config import ConfigError, ExperimentConfig, load_experiment
from .dynamics import (
    NonlinearityError,
    NumericalAbort,
    Trajectory,
    band_limited_data,
    evolve,
    free_trajectory,
    gaussian_data,
    self_similar_data,
)
from .grid import GridError, RadialField, RadialGrid
from .identities import expansion_suite, symmetrization_suite
from .observables import ObservableError, gamma_limit_estimate, propagation_integral
from .opfunc import MellinCalculus, MellinWindowError, highlow_leakage
from .output import (
    OutputError,
    read_field_csv,
    summarize,
    write_channel,
    write_decomposition_json,
    write_field_csv,
    write_json,
    write_manifest,
    write_observable_csv,
)
from .weights import WeightError

_VALIDATION_ERRORS = (
    ConfigError,
    NonlinearityError,
    ObservableError,
    ChannelError,
    GridError,
    WeightError,
    MellinWindowError,
)


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


def _read_config(config_path: str | None, preset: str | None) -> str:
    if (config_path is None) == (preset is None):
        _fail(2, "give exactly one of --config PATH or --preset NAME")
    if config_path is not None:
        try:
            return Path(config_path).read_text()
        except OSError as exc:
            _fail(4, f"cannot read config {config_path}: {exc}")
    base = importlib.resources.files("radnls").joinpath("presets")
    candidate = base.joinpath(f"{preset}.cfg")
    try:
        return candidate.read_text()
    except (FileNotFoundError, OSError):
        names = sorted(p.name[:-4] for p in base.iterdir() if p.name.endswith(".cfg"))
        _fail(2, f"unknown preset {preset!r}; shipped presets: {', '.join(names)}")


def _load(config_path, preset, out, threads, seed) -> ExperimentConfig:
    text = _read_config(config_path, preset)
    try:
        cfg = load_experiment(text)
    except ConfigError as exc:
        _fail(2, "config validation failed:\n" + str(exc))
    if out is not None:
        cfg.out_dir = out
    if threads is not None:
        cfg.threads = threads
    if seed is not None:
        cfg.seed = seed
    return cfg


def _initial_data(cfg: ExperimentConfig, grid: RadialGrid):
    p = cfg.data_params
    if cfg.data_kind == "gaussian":
        return gaussian_data(
            grid,
            amplitude=p.get("amplitude", 1.0),
            width=p.get("width", 1.0),
            center=p.get("center", 0.0),
            normalize=bool(p.get("normalize", False)),
        )
    if cfg.data_kind == "band":
        return band_limited_data(
            grid, p["k_lo"], p["k_hi"],
            center=p.get("center", 20.0),
            width=p.get("width", 4.0),
            amplitude=p.get("amplitude", 1.0),
        )
    if cfg.data_kind == "self-similar":
        return self_similar_data(
            grid, scale=p.get("scale", 5.0), amplitude=p.get("amplitude", 1.0)
        )
    f = read_field_csv(p["path"])
    if f.grid.n != grid.n or f.grid.r_max != grid.r_max:
        raise ConfigError([
            f"data.path: dump grid (n={f.grid.n}, r_max={f.grid.r_max}) does not "
            f"match config grid (n={grid.n}, r_max={grid.r_max})"
        ])
    return f


def _run_trajectory(cfg: ExperimentConfig, free: bool) -> Trajectory:
    grid = RadialGrid(n=cfg.grid_n, r_max=cfg.grid_r_max)
    phi0 = _initial_data(cfg, grid)
    if free or cfg.nonlinearity.is_free:
        step = cfg.dt * cfg.stride
        n_snap = int(round(cfg.t_final / step))
        times = [k * step for k in range(n_snap + 1)]
        if times[-1] < cfg.t_final - 1e-12:
            times.append(cfg.t_final)
        return free_trajectory(grid, phi0, times,
                               boundary_threshold=cfg.boundary_threshold)
    return evolve(
        grid, cfg.nonlinearity, phi0, cfg.t_final, cfg.dt,
        snapshot_stride=cfg.stride,
        boundary_threshold=cfg.boundary_threshold,
        h1_cap_factor=cfg.h1_cap_factor,
    )


def _run_block(traj: Trajectory) -> dict:
    mass = np.asarray(traj.mass)
    drift = float(np.max(np.abs(mass - mass[0])) / mass[0]) if mass.size else 0.0
    block = {
        "t_first": traj.times[0],
        "t_last": traj.times[-1],
        "snapshots": len(traj.times),
        "mass_drift": drift,
        "validity_end": traj.validity_end,
        "boundary_max": max(traj.boundary) if traj.boundary else 0.0,
    }
    en = np.asarray(traj.energy_series)
    if en.size:
        scale = max(abs(en[0]), 1e-30)
        block["energy_drift"] = float(np.max(np.abs(en - en[0])) / scale)
    return block


def _emit_observables(cfg: ExperimentConfig, traj: Trajectory, out: Path) -> None:
    for name in cfg.observables:
        params = cfg.observable_params.get(name, {})
        if name == "gamma_limit":
            est = gamma_limit_estimate(traj, params.get("alpha", 0.6))
            values = est["values"]
            running = np.concatenate(
                ([0.0], np.cumsum(np.diff(est["times"]) *
                                  0.5 * (np.asarray(values[1:]) + np.asarray(values[:-1]))))
            )
            write_observable_csv(out / "obs_gamma_limit.csv", "gamma_limit",
                                 est["times"], values, running)
            write_json(out / "verdict_gamma_limit.json", {
                "gamma_hat": est["gamma_hat"],
                "alpha": est["alpha"],
                "convergence_report": est["convergence_report"],
                "flags": est["flags"],
            })
        else:
            rec = propagation_integral(traj, name, params=params,
                                       workers=cfg.threads)
            tag = name.lower().replace("-", "_")
            write_observable_csv(out / f"obs_{tag}.csv", name, rec["times"],
                                 rec["integrand"], rec["running_integral"])
            write_json(out / f"verdict_{tag}.json", rec["verdict"])


def _emit_channels(cfg: ExperimentConfig, traj: Trajectory, out: Path) -> None:
    usable = [t for t in traj.times
              if t >= 2.0 and (traj.validity_end is None or t <= traj.validity_end)]
    if len(usable) < 2:
        raise ChannelError(
            "channel extraction needs at least two snapshots with t >= 2 "
            "inside the boundary-clean window"
        )
    samples = usable[max(0, len(usable) - 6):]
    channel = extract_free_channel(traj, cfg.channels_alpha0,
                                   sample_times=samples, tol=cfg.channels_tol,
                                   workers=cfg.threads)
    write_channel(out, channel)
    report = decompose(traj, channel)
    write_decomposition_json(out / "decomposition.json", report)
    if traj.times[-1] >= 4.0 * max(traj.times[0], traj.dt or 1.0):
        try:
            wls = wls_diagnostics([(t, traj.field_at(t)) for t in usable])
            write_json(out / "wls.json", wls)
        except ChannelError:
            pass


def _execute_run(cfg: ExperimentConfig, free: bool, with_channels: bool) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj = _run_trajectory(cfg, free=free)
    for idx, (t, f) in enumerate(zip(traj.times, traj.fields)):
        write_field_csv(out / f"snapshot_{idx:04d}.csv", f, time_tag=t)
    _emit_observables(cfg, traj, out)
    if with_channels or cfg.channels_enabled:
        _emit_channels(cfg, traj, out)
    write_manifest(out, cfg.raw_text, {
        "seed": cfg.seed,
        "threads": cfg.threads,
        "run": _run_block(traj),
    })
    return out


_run_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="Config file path."),
    click.option("--preset", default=None, help="Built-in preset name."),
    click.option("--out", default=None, help="Output directory (overrides config)."),
    click.option("--threads", type=int, default=None,
                 help="Worker threads for pairwise tables."),
    click.option("--seed", type=int, default=None, help="Seed recorded and used."),
]


def _with_run_options(fn):
    for opt in reversed(_run_options):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Radial NLS runs, channel extraction, and identity suites."""


def _guarded(body):
    try:
        body()
    except _VALIDATION_ERRORS as exc:
        _fail(2, f"validation failed: {exc}")
    except NumericalAbort as exc:
        _fail(3, f"numerical abort: {exc}")
    except (OutputError, OSError) as exc:
        _fail(4, f"I/O failure: {exc}")


@main.command()
@_with_run_options
def simulate(config_path, preset, out, threads, seed):
    """Run the configured evolution and emit all artifacts."""
    cfg = _load(config_path, preset, out, threads, seed)

    def body():
        where = _execute_run(cfg, free=False, with_channels=False)
        click.echo(f"run complete: {where}")

    _guarded(body)


@main.command()
@_with_run_options
def freewave(config_path, preset, out, threads, seed):
    """Run the free propagator on the configured data (interactions off)."""
    cfg = _load(config_path, preset, out, threads, seed)

    def body():
        where = _execute_run(cfg, free=True, with_channels=False)
        click.echo(f"free run complete: {where}")

    _guarded(body)


@main.command()
@_with_run_options
def channels(config_path, preset, out, threads, seed):
    """Run the evolution, extract the free channel, decompose the rest."""
    cfg = _load(config_path, preset, out, threads, seed)

    def body():
        where = _execute_run(cfg, free=False, with_channels=True)
        click.echo(f"channel run complete: {where}")

    _guarded(body)


@main.command()
@click.option("--cases", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=2026, show_default=True)
@click.option("--out", default=None, help="Optional JSON report path.")
def identities(cases, seed, out):
    """Grid-free operator identity suites (fast CI path)."""
    sym = symmetrization_suite(n_cases=cases, seed=seed)
    worst_sym = max(rep.max_residual for rep in sym)
    exp = expansion_suite(n_cases=cases, seed=seed)
    worst_slack = min(rep.slack for rep in exp)
    all_hold = all(rep.holds for rep in exp)
    click.echo(f"symmetrization: {cases} cases, max residual {worst_sym:.3e}")
    click.echo(
        f"commutator expansion: {cases} cases, bound holds: {all_hold}, "
        f"min slack {worst_slack:.3e}"
    )
    if out is not None:
        write_json(out, {
            "cases": cases,
            "seed": seed,
            "symmetrization_max_residual": worst_sym,
            "expansion_all_hold": all_hold,
            "expansion_min_slack": worst_slack,
        })
    if worst_sym > 1e-10 or not all_hold:
        _fail(3, "identity suite outside tolerance")


@main.command()
@click.option("--n", type=int, default=1024, show_default=True)
@click.option("--r-max", type=float, default=100.0, show_default=True)
@click.option("--out", default=None, help="Optional JSON report path.")
def mellin(n, r_max, out):
    """Log-axis dilation calculus checks on a small grid (fast CI path)."""

    def body():
        grid = RadialGrid(n=n, r_max=r_max)
        mel = MellinCalculus(grid)
        u = grid.r * np.exp(-((np.log(np.maximum(grid.r, 1e-30)) - 1.2) ** 2)
                            / (2.0 * 0.7**2))
        u[-1] = 0.0
        f = RadialField(grid, u.astype(complex))
        back = mel.from_log(mel.to_log(f))
        live = (grid.r >= 2.0 * mel.r_lo) & (grid.r <= 0.9 * grid.r_max)
        num = np.sqrt(np.sum(np.abs(back.u[live] - f.u[live]) ** 2))
        den = max(np.sqrt(np.sum(np.abs(f.u[live]) ** 2)), 1e-30)
        round_trip = float(num / den)
        click.echo(f"round trip (interior): {round_trip:.3e}")
        leaks = {}
        for M in (4.0, 8.0, 16.0):
            rec = highlow_leakage(f, f, mel, N=M, M=M, R=float(np.sqrt(M)))
            leaks[M] = rec["leakage"]
        msg = ", ".join(f"M={M:g}: {v:.3e}" for M, v in leaks.items())
        click.echo(f"high-low leakage: {msg}")
        decreasing = all(
            leaks[b] <= leaks[a] * (1.0 + 1e-9)
            for a, b in zip((4.0, 8.0), (8.0, 16.0))
        )
        click.echo(f"leakage monotone decreasing: {decreasing}")
        if out is not None:
            write_json(out, {
                "round_trip": round_trip,
                "leakage": {str(k): v for k, v in leaks.items()},
                "monotone": decreasing,
            })
        if round_trip > 1e-6:
            raise NumericalAbort(f"round trip {round_trip:.3e} above 1e-6")

    _guarded(body)


@main.command()
@click.argument("artifact_dir", type=click.Path())
def report(artifact_dir):
    """Summarize a finished run directory."""

    def body():
        click.echo(summarize(artifact_dir), nl=False)

    _guarded(body)


if __name__ == "__main__":
    main()
