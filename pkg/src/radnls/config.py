"""Experiment configuration: a small dotted-key text format and its gates.

A config file is plain text, one assignment per line::

    # grid and box
    grid.n = 4096
    grid.r_max = 200.0

    # interaction couplings (zero couplings drop the term)
    nonlinearity.b = 2.0
    nonlinearity.m = 2.0
    nonlinearity.n = 2.0

    data.kind = gaussian
    data.amplitude = 0.5
    data.width = 1.5

    run.dt = 0.005
    run.t_final = 50.0
    run.stride = 400
    run.boundary_threshold = 1e-6

    observables = gamma_limit, PE
    observable.gamma_limit.alpha = 0.55

    channels.enabled = true
    channels.alpha0 = 0.75

    output.dir = out
    seed = 2026

Blank lines and ``#`` comments are ignored.  Keys are dotted paths; values
are bare scalars or comma lists.  ``load_experiment`` parses, then checks
every value against the same gates the library modules enforce, and raises
a single ConfigError listing all violations at once, so a bad file is
fixed in one pass rather than one message at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dynamics import NonlinearityError, NonlinearitySpec
from .observables import PRESETS

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_experiment",
    "parse_pairs",
]

_DATA_KINDS = ("gaussian", "band", "self-similar", "file")

_KNOWN_OBSERVABLES = ("gamma_limit",) + tuple(PRESETS)


class ConfigError(ValueError):
    """One or more config entries failed validation; .problems lists them."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def parse_pairs(text: str) -> dict[str, str]:
    """Flat dict of dotted keys to raw value strings, last assignment wins."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"line {lineno}: expected 'key = value', got {raw!r}"])
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError([f"line {lineno}: empty key in {raw!r}"])
        pairs[key] = value.strip()
    return pairs


@dataclass
class ExperimentConfig:
    """Validated experiment description, ready to hand to the runner."""

    grid_n: int = 4096
    grid_r_max: float = 200.0
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    data_kind: str = "gaussian"
    data_params: dict = field(default_factory=dict)
    dt: float = 0.005
    t_final: float = 50.0
    stride: int = 400
    boundary_threshold: float = 1e-6
    h1_cap_factor: float = 100.0
    observables: tuple = ()
    observable_params: dict = field(default_factory=dict)
    channels_enabled: bool = False
    channels_alpha0: float = 0.75
    channels_tol: float = 0.1
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    raw_text: str = ""


def _get(pairs, key, cast, default, problems):
    raw = pairs.pop(key, None)
    if raw is None:
        return default
    try:
        if cast is bool:
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError:
        problems.append(f"{key}: cannot read {raw!r} as {cast.__name__}")
        return default


def load_experiment(text: str) -> ExperimentConfig:
    """Parse and validate a config text; every violated gate is reported."""
    pairs = parse_pairs(text)
    problems: list[str] = []
    cfg = ExperimentConfig(raw_text=text)

    cfg.grid_n = _get(pairs, "grid.n", int, cfg.grid_n, problems)
    cfg.grid_r_max = _get(pairs, "grid.r_max", float, cfg.grid_r_max, problems)
    if cfg.grid_n < 16:
        problems.append(f"grid.n: need at least 16 nodes, got {cfg.grid_n}")
    if cfg.grid_r_max <= 0:
        problems.append(f"grid.r_max: box size must be positive, got {cfg.grid_r_max}")

    nl_kwargs = {}
    for name in ("a", "p", "b", "m", "n", "v_amp", "q", "w_amp", "w_width"):
        raw = pairs.pop(f"nonlinearity.{name}", None)
        if raw is not None:
            try:
                nl_kwargs[name] = float(raw)
            except ValueError:
                problems.append(f"nonlinearity.{name}: cannot read {raw!r} as float")
    raw = pairs.pop("nonlinearity.f_kind", None)
    if raw is not None:
        nl_kwargs["f_kind"] = raw
    try:
        cfg.nonlinearity = NonlinearitySpec(**nl_kwargs)
    except NonlinearityError as exc:
        problems.append(f"nonlinearity: {exc}")

    cfg.data_kind = _get(pairs, "data.kind", str, cfg.data_kind, problems)
    if cfg.data_kind not in _DATA_KINDS:
        problems.append(
            f"data.kind: {cfg.data_kind!r} is not one of {', '.join(_DATA_KINDS)}"
        )
    for key in [k for k in pairs if k.startswith("data.")]:
        name = key.split(".", 1)[1]
        raw = pairs.pop(key)
        if name in ("path",):
            cfg.data_params[name] = raw
        elif name in ("normalize",):
            cfg.data_params[name] = raw.lower() in ("true", "yes", "1")
        else:
            try:
                cfg.data_params[name] = float(raw)
            except ValueError:
                problems.append(f"{key}: cannot read {raw!r} as float")
    if cfg.data_kind == "band":
        k_lo = cfg.data_params.get("k_lo")
        k_hi = cfg.data_params.get("k_hi")
        if k_lo is None or k_hi is None:
            problems.append("data.kind=band requires data.k_lo and data.k_hi")
        elif not 0 < k_lo < k_hi:
            problems.append(
                f"band data needs 0 < k_lo < k_hi, got [{k_lo}, {k_hi}]"
            )
    if cfg.data_kind == "file" and "path" not in cfg.data_params:
        problems.append("data.kind=file requires data.path")

    cfg.dt = _get(pairs, "run.dt", float, cfg.dt, problems)
    cfg.t_final = _get(pairs, "run.t_final", float, cfg.t_final, problems)
    cfg.stride = _get(pairs, "run.stride", int, cfg.stride, problems)
    cfg.boundary_threshold = _get(pairs, "run.boundary_threshold", float,
                                  cfg.boundary_threshold, problems)
    cfg.h1_cap_factor = _get(pairs, "run.h1_cap_factor", float,
                             cfg.h1_cap_factor, problems)
    if cfg.dt <= 0:
        problems.append(f"run.dt: step must be positive, got {cfg.dt}")
    if cfg.t_final <= 0:
        problems.append(f"run.t_final: horizon must be positive, got {cfg.t_final}")
    if cfg.stride < 1:
        problems.append(f"run.stride: snapshot stride must be >= 1, got {cfg.stride}")

    raw = pairs.pop("observables", "")
    names = tuple(s.strip() for s in raw.split(",") if s.strip())
    cfg.observables = names
    for name in names:
        if name not in _KNOWN_OBSERVABLES:
            problems.append(
                f"observables: unknown name {name!r}; "
                f"known: {', '.join(_KNOWN_OBSERVABLES)}"
            )
    for key in [k for k in pairs if k.startswith("observable.")]:
        parts = key.split(".")
        raw = pairs.pop(key)
        if len(parts) != 3:
            problems.append(f"{key}: expected observable.<name>.<param>")
            continue
        _, name, param = parts
        try:
            cfg.observable_params.setdefault(name, {})[param] = float(raw)
        except ValueError:
            problems.append(f"{key}: cannot read {raw!r} as float")
    alpha = cfg.observable_params.get("gamma_limit", {}).get("alpha")
    if "gamma_limit" in names:
        alpha = 0.6 if alpha is None else alpha
        cfg.observable_params.setdefault("gamma_limit", {})["alpha"] = alpha
        if not (1.0 / 3.0 < alpha < 1.0):
            problems.append(
                f"observable.gamma_limit.alpha: exponent must lie in (1/3, 1), got {alpha}"
            )
        elif cfg.t_final**alpha <= 4.0:
            problems.append(
                "observable.gamma_limit.alpha: run too short, "
                f"t_final^alpha = {cfg.t_final ** alpha:.3g} <= 4"
            )

    cfg.channels_enabled = _get(pairs, "channels.enabled", bool,
                                cfg.channels_enabled, problems)
    cfg.channels_alpha0 = _get(pairs, "channels.alpha0", float,
                               cfg.channels_alpha0, problems)
    cfg.channels_tol = _get(pairs, "channels.tol", float, cfg.channels_tol, problems)
    if cfg.channels_enabled and not 0.5 < cfg.channels_alpha0 < 1.0:
        problems.append(
            f"channels.alpha0: exponent must lie in (1/2, 1), got {cfg.channels_alpha0}"
        )
    if cfg.channels_enabled and cfg.channels_tol <= 0:
        problems.append(f"channels.tol: tolerance must be positive, got {cfg.channels_tol}")

    cfg.out_dir = _get(pairs, "output.dir", str, cfg.out_dir, problems)
    cfg.seed = _get(pairs, "seed", int, cfg.seed, problems)
    cfg.threads = _get(pairs, "threads", int, cfg.threads, problems)
    if cfg.threads < 1:
        problems.append(f"threads: need at least 1, got {cfg.threads}")

    for key in sorted(pairs):
        problems.append(f"{key}: unknown key")
    if problems:
        raise ConfigError(problems)
    return cfg
