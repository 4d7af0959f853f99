"""Artifact emission: deterministic CSV/JSON writers and the run summary.

Every writer here is reproducible byte for byte under a fixed config and
seed: floats are serialized with repr (shortest round-trip), JSON keys are
sorted, and nothing stamps wall-clock time.  Column headers carry the
normalization conventions so a dumped number can be read without the code.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .grid import RadialField, RadialGrid, l2_norm

__all__ = [
    "OutputError",
    "read_field_csv",
    "summarize",
    "write_channel",
    "write_decomposition_json",
    "write_field_csv",
    "write_json",
    "write_manifest",
    "write_observable_csv",
    "write_weight_csv",
]


class OutputError(RuntimeError):
    """A file expected in an artifact directory is missing or unreadable."""


def _fmt(x) -> str:
    return repr(float(x))


def write_field_csv(path, f: RadialField, time_tag: float) -> None:
    """Snapshot dump; the reduced field u = r*phi is divided back out."""
    g = f.grid
    phi = f.phi()
    lines = [
        f"# r_max={_fmt(g.r_max)} n={g.n} time_tag={_fmt(time_tag)}",
        "# normalization: mass = 4*pi*h*sum |r*phi|^2",
        "r,re_phi,im_phi",
    ]
    for r, v in zip(g.r, phi):
        lines.append(f"{_fmt(r)},{_fmt(v.real)},{_fmt(v.imag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path) -> RadialField:
    """Rebuild a field from a dump, reconstructing its grid from the header."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OutputError(f"cannot read field dump {path}: {exc}") from exc
    if not lines or not lines[0].startswith("#"):
        raise OutputError(f"corrupted field dump {path}: missing header line")
    header = dict(item.split("=", 1) for item in lines[0][1:].split() if "=" in item)
    try:
        r_max = float(header["r_max"])
        n = int(header["n"])
    except (KeyError, ValueError) as exc:
        raise OutputError(f"corrupted field dump {path}: bad header {lines[0]!r}") from exc
    data = []
    for ln in lines[1:]:
        if not ln or ln.startswith("#") or ln.startswith("r,"):
            continue
        parts = ln.split(",")
        if len(parts) != 3:
            raise OutputError(f"corrupted field dump {path}: bad row {ln!r}")
        try:
            data.append(tuple(float(p) for p in parts))
        except ValueError as exc:
            raise OutputError(f"corrupted field dump {path}: bad row {ln!r}") from exc
    if len(data) != n:
        raise OutputError(
            f"corrupted field dump {path}: header says n={n}, found {len(data)} rows"
        )
    grid = RadialGrid(n=n, r_max=r_max)
    arr = np.asarray(data)
    phi = arr[:, 1] + 1j * arr[:, 2]
    u = grid.r * phi
    u[-1] = 0.0
    return RadialField(grid, u)


def write_observable_csv(path, label: str, times, values, running) -> None:
    lines = [
        f"# observable={label}",
        "# normalization: value is the 4*pi-weighted expectation at time t;"
        " running_integral is its trapezoid integral from the first row",
        "t,value,running_integral",
    ]
    for t, v, s in zip(times, values, running):
        lines.append(f"{_fmt(t)},{_fmt(v)},{_fmt(s)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_weight_csv(path, lam, value, d1, d2, label: str = "weight") -> None:
    lines = [
        f"# profile={label}",
        "lambda,value,d1,d2",
    ]
    for row in zip(lam, value, d1, d2):
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def write_json(path, record: dict) -> None:
    Path(path).write_text(
        json.dumps(_jsonable(record), sort_keys=True, indent=2, allow_nan=False)
        + "\n"
    )


def write_channel(out_dir, channel) -> None:
    """ChannelResult: the extracted state as a field dump plus its tables."""
    out_dir = Path(out_dir)
    write_field_csv(out_dir / "omega.csv", channel.omega, time_tag=0.0)
    write_json(out_dir / "channel.json", {
        "alpha0": channel.alpha0,
        "times": list(channel.times),
        "l2_table": channel.l2_table,
        "h1_table": channel.h1_table,
        "ref_norm": channel.ref_norm,
        "tol": channel.tol,
        "late_pair_distance": channel.late_pair_distance,
        "accepted": channel.accepted,
        "omega_l2": l2_norm(channel.omega),
    })


def write_decomposition_json(path, report) -> None:
    write_json(path, {
        "alpha0": report.alpha0,
        "times": report.times,
        "residual_exact": report.residual_exact,
        "residual_interior": report.residual_interior,
        "wb_mass": report.wb_mass,
        "exterior_mass": report.exterior_mass,
        "exterior_exponent": report.exterior_exponent,
        "growth_exponent": report.growth_exponent,
        "orthogonality": report.orthogonality,
        "orthogonality_exponent": report.orthogonality_exponent,
        "bookkeeping": report.bookkeeping,
        "below_floor": report.below_floor,
    })


def write_manifest(out_dir, config_text: str, entries: dict) -> None:
    record = {
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "versions": {
            "package": __version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    record.update(entries)
    write_json(Path(out_dir) / "MANIFEST.json", record)


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise OutputError(f"corrupted JSON in {path}: {exc}") from exc


def summarize(artifact_dir) -> str:
    """One-page text summary of a finished run directory.

    Reports conservation drift, each observable verdict with its fitted
    exponent, and the channel Cauchy gap when a channel block was run.
    Raises OutputError when the manifest is absent (not a run directory)
    or a referenced file is unreadable, naming the file.
    """
    d = Path(artifact_dir)
    manifest_path = d / "MANIFEST.json"
    if not manifest_path.exists():
        raise OutputError(f"no MANIFEST.json in {d}: not a finished run directory")
    manifest = _load_json(manifest_path)
    lines = [f"run summary: {d}"]
    lines.append(f"config sha256: {manifest.get('config_sha256', '?')[:16]}...")

    run_info = manifest.get("run", {})
    if run_info:
        lines.append(
            "trajectory: t in [{}, {}], {} snapshots, mass drift {:.3e}".format(
                run_info.get("t_first"), run_info.get("t_last"),
                run_info.get("snapshots"), run_info.get("mass_drift", float("nan")),
            )
        )
        if run_info.get("energy_drift") is not None:
            lines.append(f"energy drift: {run_info['energy_drift']:.3e}")
        if run_info.get("validity_end") is not None:
            lines.append(
                f"boundary-clean window ends at t = {run_info['validity_end']}"
            )

    for path in sorted(d.glob("verdict_*.json")):
        v = _load_json(path)
        name = path.stem.replace("verdict_", "")
        if "gamma_hat" in v:
            rep = v.get("convergence_report", {})
            lines.append(
                "gamma limit [{}]: Gamma_hat = {} (tail oscillation {:.3e}, "
                "decay rate {:.3g})".format(
                    name, _fmt(v["gamma_hat"]), rep.get("oscillation", float("nan")),
                    rep.get("decay_rate", float("nan")),
                )
            )
        else:
            ratio = v.get("tail_ratio")
            lines.append(
                "{}: converged={} tail_ratio={} fitted_exponent={:.4g}".format(
                    name, v.get("converged"),
                    "n/a" if ratio is None else format(ratio, ".4g"),
                    v.get("fitted_exponent", float("nan")),
                )
            )

    channel_path = d / "channel.json"
    if channel_path.exists():
        ch = _load_json(channel_path)
        lines.append(
            "channel: alpha0={} late Cauchy gap {} (tol {} x ref {}), accepted={}".format(
                ch.get("alpha0"), _fmt(ch.get("late_pair_distance", float("nan"))),
                ch.get("tol"), _fmt(ch.get("ref_norm", float("nan"))),
                ch.get("accepted"),
            )
        )
    decomp_path = d / "decomposition.json"
    if decomp_path.exists():
        rep = _load_json(decomp_path)
        wb = rep.get("wb_mass", [])
        lines.append(
            "remainder: max mass {}, growth exponent {}, below_floor={}".format(
                _fmt(max(wb) if wb else 0.0), rep.get("growth_exponent"),
                rep.get("below_floor"),
            )
        )
    return "\n".join(lines) + "\n"
