"""Expectation series and propagation integrals over trajectory snapshots.

The measured operators are sandwiches built from three kinds of factor: an
exterior position window F(g(r)/t^alpha), velocity bands F(gamma t^beta)
synthesized through the weight flow, and the flux window sqrt(F F') sitting
between them.  Each named preset integrates the quantity its estimate
controls.  Parameter gates are validated before any field is touched, and
the running integral carries a convergence verdict (tail-increment ratio
plus a fitted growth exponent) rather than a bare number, because most of
the limits measured here come with no rate, only existence.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .dynamics import Trajectory
from .grid import RadialField, RadialGrid, boundary_mass_fraction, h1dot_norm, inner, l2_norm
from .operators import OperatorToolbox, expectation_multiplier
from .opfunc import GammaCalculus, MellinCalculus, tanh_projection
from .weights import (
    CallableProfile,
    Cutoff,
    InverseRangeMultiplier,
    MorawetzMultiplier,
    Profile,
    ShiftedStep,
    mirror,
    smooth_char,
)

__all__ = [
    "Factor",
    "ObservableError",
    "ObservableSpec",
    "PRESETS",
    "PropagationEngine",
    "boundary_limit_check",
    "commutator_locality_ratio",
    "default_engine",
    "dilation_band",
    "dilation_bound_series",
    "dilation_bound_sweep",
    "dilation_op",
    "expectation",
    "exterior_morawetz",
    "gamma_band",
    "gamma_limit_estimate",
    "gamma_op",
    "local_smoothing_functional",
    "momentum_power",
    "position_cutoff",
    "propagation_integral",
    "smoothing_window_scan",
    "tanh_band",
    "virial_series",
    "weight_factor",
]

PRESETS = ("PE", "PE-2", "PE-3", "PE-4V2", "PE-5", "PE-boundary", "Bab", "PE-r2")


class ObservableError(ValueError):
    """Bad observable composition or preset parameters outside their gates."""


# ---------------------------------------------------------------------------
# small fitting helpers
# ---------------------------------------------------------------------------

def _loglog_slope(x, y, floor: float = 1e-14) -> float:
    """Least-squares slope of log y against log x; 0.0 when underdetermined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > floor)
    if int(np.count_nonzero(keep)) < 3:
        return 0.0
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def _l2sq(f: RadialField) -> float:
    v = l2_norm(f)
    return v * v


def _re(z: complex) -> float:
    return float(np.real(z))


# ---------------------------------------------------------------------------
# observable compositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Factor:
    """One self-adjoint factor of a composed observable.

    kind selects the action; the remaining fields are read only by the
    kinds that need them.  All supported factors are self-adjoint on the
    reduced field, so the adjoint of a composition is the reversed list.
    """

    kind: str
    profile: Profile | None = None
    alpha: float = 0.0
    beta: float = 0.0
    eps: float = 0.0
    threshold: float = 1.0
    log_power: float = 0.0
    M: float = 0.0
    R: float | None = None
    sign: int = 1
    values: object = None
    power: float = 1.0

    def needs_time(self) -> bool:
        return bool(self.alpha or self.beta or self.eps or self.log_power)


def position_cutoff(profile: Profile | None = None, alpha: float = 0.0,
                    log_power: float = 0.0) -> Factor:
    """Multiplier F(g(r) / (t^alpha log^a t)); the outer sandwich factor."""
    prof = profile if profile is not None else smooth_char("rising", 1.0)
    return Factor(kind="position", profile=prof, alpha=alpha, log_power=log_power)


def gamma_band(profile: Profile | None = None, beta: float = 0.0,
               threshold: float = 1.0, log_power: float = 0.0) -> Factor:
    """F(gamma t^beta log^b t / threshold), synthesized through the flow."""
    prof = profile if profile is not None else smooth_char("rising", 1.0)
    if threshold <= 0:
        raise ObservableError(f"gamma band threshold must be positive, got {threshold}")
    return Factor(kind="gamma_band", profile=prof, beta=beta,
                  threshold=threshold, log_power=log_power)


def dilation_band(profile: Profile, eps: float = 0.0) -> Factor:
    """F(A / t^eps) as a multiplier on the dilation spectrum."""
    return Factor(kind="dilation_band", profile=profile, eps=eps)


def tanh_band(M: float, R: float | None = None, sign: int = 1) -> Factor:
    return Factor(kind="tanh", M=M, R=R, sign=sign)


def weight_factor(values) -> Factor:
    """Real multiplication weight; values is an array or a callable of r."""
    return Factor(kind="weight", values=values)


def gamma_op() -> Factor:
    return Factor(kind="gamma")


def dilation_op() -> Factor:
    return Factor(kind="dilation")


def momentum_power(power: float = 1.0) -> Factor:
    """|p|^power through the sine spectrum."""
    return Factor(kind="momentum", power=power)


@dataclass(frozen=True)
class ObservableSpec:
    """Ordered factor composition; factors[0] is the leftmost operator."""

    label: str
    factors: tuple = ()


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

class PropagationEngine:
    """Shared toolboxes plus quadrature policy for snapshot observables.

    The flow synthesis cost grows with the sharpness of the requested
    velocity cutoff, so the engine sizes the node count from the smallest
    transition width and refuses bands it cannot resolve instead of
    silently returning a smeared answer.
    """

    def __init__(self, grid: RadialGrid, weight=None, t0: float = 10.0,
                 window_factor: float = 30.0, tail_tol: float = 1e-6,
                 ds: float = 0.08, max_nodes: int = 65536):
        self.grid = grid
        self.toolbox = OperatorToolbox(grid, weight)
        self.weight = self.toolbox.weight
        self.calculus = GammaCalculus(grid, self.weight)
        self.t0 = float(t0)
        self.window_factor = float(window_factor)
        self.tail_tol = float(tail_tol)
        self.ds = float(ds)
        self.max_nodes = int(max_nodes)
        self.gvals = np.asarray(self.weight.g(grid.r), dtype=float)
        self._mellin: MellinCalculus | None = None

    @property
    def mellin(self) -> MellinCalculus:
        if self._mellin is None:
            self._mellin = MellinCalculus(self.grid)
        return self._mellin

    # -- tabulated position factors -----------------------------------------

    def cutoff_values(self, profile: Profile, scale: float) -> np.ndarray:
        return np.asarray(profile.value(self.gvals / scale), dtype=float)

    def flux_window_values(self, cutoff, scale: float) -> np.ndarray:
        """sqrt(F F') of a cutoff at g(r)/scale, clipped at zero."""
        lam = self.gvals / scale
        prod = np.asarray(cutoff.value(lam), float) * np.asarray(cutoff.deriv(lam), float)
        return np.sqrt(np.maximum(prod, 0.0))

    # -- velocity bands ------------------------------------------------------

    def gamma_apply(self, f: RadialField, profile: Profile, tau: float,
                    feature_width: float | None = None) -> RadialField:
        """profile(gamma / tau) f with the node count sized to the band.

        feature_width overrides the transition width read off the profile's
        derivative support, for profiles whose support interval is much
        wider than their sharpest feature.
        """
        widths = [hi - lo for lo, hi in profile.deriv_support]
        if not widths:
            return RadialField(self.grid, f.u * 0.5 * sum(profile.asymptotes))
        w_plan = min(widths) * tau
        w_feat = (feature_width if feature_width is not None else min(widths)) * tau
        if w_feat <= 0:
            raise ObservableError("velocity band has a degenerate transition")
        S = self.window_factor / w_feat
        n_raw = 2.0 * S / self.ds
        n_nodes = int(min(self.max_nodes, max(2048, 2 ** math.ceil(math.log2(n_raw)))))
        if 2.0 * S / n_nodes > 4.0 * self.ds:
            raise ObservableError(
                "velocity cutoff too sharp for the synthesis window; raise the "
                "band threshold, lower its time exponent, or coarsen ds"
            )
        wf = S * w_plan
        return self.calculus.func_of_gamma(f, profile, tau=tau, n_nodes=n_nodes,
                                           window_factor=wf, tail_tol=self.tail_tol)

    # -- factor chains -------------------------------------------------------

    def _apply_factor(self, fac: Factor, f: RadialField, t: float) -> RadialField:
        kind = fac.kind
        if kind == "position":
            scale = t ** fac.alpha
            if fac.log_power:
                scale *= math.log(t) ** fac.log_power
            return self.toolbox.multiply(self.cutoff_values(fac.profile, scale), f)
        if kind == "gamma_band":
            tau = fac.threshold * t ** (-fac.beta)
            if fac.log_power:
                tau *= math.log(t) ** (-fac.log_power)
            return self.gamma_apply(f, fac.profile, tau)
        if kind == "dilation_band":
            scale = t ** fac.eps
            prof = fac.profile
            return self.mellin.func_of_dilation(f, lambda lam: prof.value(lam / scale))
        if kind == "tanh":
            return self.mellin.func_of_dilation(f, tanh_projection(fac.M, fac.R, fac.sign))
        if kind == "weight":
            vals = fac.values(self.grid.r) if callable(fac.values) else fac.values
            return self.toolbox.multiply(np.asarray(vals, dtype=float), f)
        if kind == "gamma":
            return self.toolbox.gamma(f)
        if kind == "dilation":
            return self.toolbox.dilation(f)
        if kind == "momentum":
            p = fac.power
            return self.toolbox.momentum_multiplier(lambda k: k ** p, f)
        raise ObservableError(f"unknown factor kind {kind!r}")

    def apply_chain(self, factors, f: RadialField, t: float) -> RadialField:
        out = f
        for fac in reversed(tuple(factors)):
            out = self._apply_factor(fac, out, t)
        return out


_ENGINES: dict[int, PropagationEngine] = {}


def default_engine(grid: RadialGrid) -> PropagationEngine:
    """Per-grid engine cache; the engine keeps its grid alive."""
    key = id(grid)
    eng = _ENGINES.get(key)
    if eng is None or eng.grid is not grid:
        eng = PropagationEngine(grid)
        _ENGINES[key] = eng
    return eng


# ---------------------------------------------------------------------------
# expectation of a composed observable
# ---------------------------------------------------------------------------

def expectation(obs: ObservableSpec, f: RadialField, t: float = 1.0,
                engine: PropagationEngine | None = None,
                with_residual: bool = False):
    """Expectation of the symmetrized composition at snapshot time t.

    The operator is symmetrized as the mean of the factor chain and its
    reverse before taking the inner product, so the result is real up to
    quadrature noise; the relative imaginary remainder is available via
    with_residual.
    """
    engine = engine or default_engine(f.grid)
    factors = tuple(obs.factors)
    if any(fac.needs_time() for fac in factors) and not t > 0:
        raise ObservableError(f"observable {obs.label!r} scales with time and needs t > 0")
    if any(fac.log_power for fac in factors) and not t > 1:
        raise ObservableError(f"observable {obs.label!r} carries log powers and needs t > 1")
    z1 = inner(engine.apply_chain(factors, f, t), f)
    if len(factors) > 1:
        z2 = inner(engine.apply_chain(tuple(reversed(factors)), f, t), f)
    else:
        z2 = z1
    z = 0.5 * (z1 + z2)
    val = float(z.real)
    if with_residual:
        resid = abs(z.imag) / max(abs(val), 1e-300)
        return val, resid
    return val


# ---------------------------------------------------------------------------
# gamma limit
# ---------------------------------------------------------------------------

def _snapshot_rows(run: Trajectory, t_min: float = 0.0, include_zero: bool = False):
    rows = [(float(t), f) for t, f in zip(run.times, run.fields)
            if (t > 0 or include_zero) and t >= t_min]
    truncated = False
    if run.validity_end is not None:
        kept = [(t, f) for t, f in rows if t <= run.validity_end]
        truncated = len(kept) < len(rows)
        rows = kept
    return rows, truncated


def gamma_limit_estimate(run: Trajectory, alpha: float,
                         F: Cutoff | None = None,
                         engine: PropagationEngine | None = None) -> dict:
    """Tail estimate of <F gamma F> with the window riding out at t^alpha.

    Returns the series, the last-quartile average Gamma_hat, and a
    convergence report holding the fitted decay rate of the residual and
    the Cauchy oscillation of the tail.  The run must reach far enough
    that t_max^alpha clears the plateau of the weight by a safe margin.
    """
    if not (1.0 / 3.0 < alpha < 1.0):
        raise ObservableError(f"gamma limit needs alpha in (1/3, 1), got {alpha}")
    engine = engine or default_engine(run.grid)
    F = F if F is not None else smooth_char("rising", 1.0)
    rows, truncated = _snapshot_rows(run)
    if not rows:
        raise ObservableError("run has no usable positive-time snapshots")
    t_max = rows[-1][0]
    if t_max ** alpha <= 4.0:
        raise ObservableError(
            f"run too short for a gamma limit: t_max^alpha = {t_max ** alpha:.3g} <= 4"
        )
    tb = engine.toolbox
    times, values = [], []
    for t, f in rows:
        w = tb.multiply(engine.cutoff_values(F, t ** alpha), f)
        times.append(t)
        values.append(_re(inner(tb.gamma(w), w)))
    arr_t = np.asarray(times)
    arr_v = np.asarray(values)
    quart = max(2, len(values) // 4)
    tail = arr_v[-quart:]
    gamma_hat = float(np.mean(tail))
    oscillation = float(np.max(tail) - np.min(tail))
    resid = np.abs(arr_v - gamma_hat)
    half = len(values) // 2
    decay_rate = -_loglog_slope(arr_t[half:], resid[half:])
    return {
        "label": "gamma_limit",
        "alpha": alpha,
        "times": times,
        "values": values,
        "gamma_hat": gamma_hat,
        "convergence_report": {
            "decay_rate": decay_rate,
            "oscillation": oscillation,
            "tail_points": quart,
        },
        "flags": {"scaled": t_max < 100.0, "boundary_truncated": truncated},
    }


# ---------------------------------------------------------------------------
# propagation presets: gates
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "PE": {"alpha": 0.6},
    "PE-2": {"alpha": 0.6, "delta": 0.5},
    "PE-3": {"alpha": 0.6, "delta": 0.5},
    "PE-4V2": {"alpha": 0.6, "beta": 0.3, "c0": 0.5},
    "PE-5": {"alpha": 0.7, "beta": 0.3, "c1": 0.15},
    "PE-boundary": {"alpha": 0.7, "beta": 0.3},
    "Bab": {"a": 0.0, "b": -1.5, "c": 0.5},
    "PE-r2": {"alpha": 0.7, "beta": 0.3, "M": 4.0},
}


def _gate(preset: str, p: dict) -> str:
    """Validate parameters against the preset's admissible cases.

    Returns the matched case label; raises with every violated condition
    spelled out so a refusal is actionable.
    """
    if preset == "PE":
        a = p["alpha"]
        if not (1.0 / 3.0 < a < 1.0):
            raise ObservableError(f"PE refuses: needs 1/3 < alpha < 1; got alpha={a}")
        return "alpha in (1/3, 1)"
    if preset in ("PE-2", "PE-3"):
        a, d = p["alpha"], p["delta"]
        bad = []
        if not (1.0 / 3.0 < a < 1.0):
            bad.append(f"needs 1/3 < alpha < 1 (got {a})")
        if not d > 0:
            bad.append(f"needs delta > 0 (got {d})")
        if bad:
            raise ObservableError(f"{preset} refuses: " + "; ".join(bad))
        return "alpha in (1/3, 1), delta > 0"
    if preset == "PE-4V2":
        a, b, c0 = p["alpha"], p["beta"], p["c0"]
        if 0.5 < a < 1.0 and b > 0 and a + b < 1.0 and c0 > 0:
            return "case (1)"
        if 1.0 / 3.0 < a < 1.0 and 0 < b < a and c0 > 0:
            return "case (2)"
        if a > 0.5 and abs(a + b - 1.0) <= 1e-12 and c0 > a / 2.0:
            return "case (3)"
        raise ObservableError(
            "PE-4V2 refuses: parameters match no case; case (1) needs "
            "1/2 < alpha < 1, alpha + beta < 1, c0 > 0; case (2) needs "
            "1/3 < alpha < 1, 0 < beta < alpha, c0 > 0; case (3) needs "
            f"alpha > 1/2, alpha + beta = 1, c0 > alpha/2; got alpha={a}, "
            f"beta={b}, c0={c0}"
        )
    if preset == "PE-5":
        a, b, c1 = p["alpha"], p["beta"], p["c1"]
        bad = []
        if not a > 0.5:
            bad.append(f"needs alpha > 1/2 (got {a})")
        if abs(a + b - 1.0) > 1e-12:
            bad.append(f"needs alpha + beta = 1 (got {a + b})")
        if not (0 < c1 < a / 4.0):
            bad.append(f"needs 0 < c1 < alpha/4 (got c1={c1}, alpha/4={a / 4.0})")
        if bad:
            raise ObservableError("PE-5 refuses: " + "; ".join(bad))
        return "alpha + beta = 1, c1 < alpha/4"
    if preset == "PE-boundary":
        a, b = p["alpha"], p["beta"]
        bad = []
        if not a > 0.5:
            bad.append(f"needs alpha > 1/2 (got {a})")
        if abs(a + b - 1.0) > 1e-12:
            bad.append(f"needs alpha + beta = 1 (got {a + b})")
        if bad:
            raise ObservableError("PE-boundary refuses: " + "; ".join(bad))
        return "alpha + beta = 1"
    if preset == "Bab":
        a, b, c = p["a"], p["b"], p["c"]
        bad = []
        if not 3 * a - b > 1:
            bad.append(f"needs 3a - b > 1 (got {3 * a - b})")
        if not 2 * a - 2 * b > 1:
            bad.append(f"needs 2a - 2b > 1 (got {2 * a - 2 * b})")
        if a + b < 0:
            if not c > 0:
                bad.append(f"with a + b < 0 needs c > 0 (got {c})")
            case = "a + b < 0, c > 0"
        elif a + b == 0:
            if not c > 0.25:
                bad.append(f"with a + b = 0 needs c > 1/4 (got {c})")
            case = "a + b = 0, c > 1/4"
        else:
            bad.append(f"needs a + b <= 0 (got {a + b})")
            case = ""
        if bad:
            raise ObservableError("Bab refuses: " + "; ".join(bad))
        return case
    if preset == "PE-r2":
        a, b, M = p["alpha"], p["beta"], p["M"]
        bad = []
        if not a > 0.5:
            bad.append(f"needs alpha > 1/2 (got {a})")
        if not (0 < b <= 1.0 - a):
            bad.append(f"needs beta in (0, 1 - alpha] (got beta={b}, 1 - alpha={1.0 - a})")
        if not M >= 1.0:
            bad.append(f"needs M >= 1 (got {M})")
        if bad:
            raise ObservableError("PE-r2 refuses: " + "; ".join(bad))
        return "alpha > 1/2, beta <= 1 - alpha"
    raise ObservableError(f"unknown preset {preset!r}; available: {', '.join(PRESETS)}")


# ---------------------------------------------------------------------------
# propagation presets: derived profiles
# ---------------------------------------------------------------------------

def _deriv_profile(cutoff: Cutoff) -> CallableProfile:
    """The derivative bump F' of a cutoff, packaged as its own profile."""
    return CallableProfile(fn=cutoff.d1, dfn=cutoff.d2,
                           deriv_support=cutoff.deriv_support,
                           asymptotes=(0.0, 0.0))


def _edge_profile(cutoff: Cutoff) -> CallableProfile:
    """mu F'(mu): the band-edge density weighted by its spectral position."""

    def fn(mu):
        mu = np.asarray(mu, dtype=float)
        return mu * cutoff.d1(mu)

    def dfn(mu):
        mu = np.asarray(mu, dtype=float)
        return cutoff.d1(mu) + mu * cutoff.d2(mu)

    return CallableProfile(fn=fn, dfn=dfn, deriv_support=cutoff.deriv_support,
                           asymptotes=(0.0, 0.0))


def _abs_band_profile(power: int, s: float, M: float):
    """|lam|^power restricted to the band 1/s <~ |lam| <~ M.

    The lower edge rises over |lam| s in [1/2, 1] and the upper edge falls
    over |lam| in [M/2, M], so the derivative support spans the whole band
    while the sharpest feature is the lower transition of width 1/(2s).
    Returns the profile plus that feature width.
    """
    rise = smooth_char("rising", 1.0)
    fall = smooth_char("falling", M)
    lo = 1.0 / s

    def fn(lam):
        lam = np.asarray(lam, dtype=float)
        m = np.abs(lam)
        return m ** power * rise.value(m * s) * fall.value(m)

    def dfn(lam):
        lam = np.asarray(lam, dtype=float)
        m = np.abs(lam)
        core = (power * m ** (power - 1) * rise.value(m * s) * fall.value(m)
                + m ** power * s * rise.d1(m * s) * fall.value(m)
                + m ** power * rise.value(m * s) * fall.d1(m))
        return np.sign(lam) * core

    sup = ((-M, -lo / 2.0), (lo / 2.0, M))
    prof = CallableProfile(fn=fn, dfn=dfn, deriv_support=sup, asymptotes=(0.0, 0.0))
    return prof, lo / 2.0


def _scaling_ladder(alpha: float):
    """Smallest J with (3/4)^J < alpha/8, by direct search."""
    j = 1
    while 0.75 ** j >= alpha / 8.0:
        j += 1
        if j > 200:
            raise ObservableError("scaling ladder failed to terminate; alpha too small")
    return j


# ---------------------------------------------------------------------------
# propagation presets: snapshot evaluators
# ---------------------------------------------------------------------------

def _build_pe(engine, p, rows):
    F1 = smooth_char("rising", 1.0, order=p.get("order", 7))
    alpha = p["alpha"]

    def ev(t, f):
        w = engine.toolbox.multiply(engine.flux_window_values(F1, t ** alpha), f)
        return {"flux": t ** (-alpha) * _l2sq(engine.toolbox.gamma(w))}, {}

    return ev, {}


def _build_pe2(engine, p, rows):
    F1 = smooth_char("rising", 1.0, order=p.get("order", 7))
    rise = smooth_char("rising", 1.0)
    alpha, delta = p["alpha"], p["delta"]

    def ev(t, f):
        tb = engine.toolbox
        w = tb.multiply(engine.flux_window_values(F1, t ** alpha), f)
        f2w = engine.gamma_apply(w, rise, tau=delta)
        flux = t ** (-alpha) * _re(inner(tb.gamma(f2w), w))
        mass = (1.0 / t) * _re(inner(f2w, w))
        v = tb.multiply(engine.cutoff_values(F1, t ** alpha), f)
        limit = _re(inner(engine.gamma_apply(v, rise, tau=delta), v))
        return {"flux": flux, "band_mass": mass}, {"band_limit": limit}

    return ev, {}


def _build_pe3(engine, p, rows):
    F1 = smooth_char("rising", 1.0, order=p.get("order", 7))
    incoming = mirror(smooth_char("rising", 1.0))
    alpha, delta = p["alpha"], p["delta"]

    def ev(t, f):
        tb = engine.toolbox
        v = tb.multiply(engine.cutoff_values(F1, t ** alpha), f)
        f3v = engine.gamma_apply(v, incoming, tau=delta)
        flux = t ** (-alpha) * abs(_re(inner(tb.gamma(f3v), v)))
        mass = t ** (-alpha) * _re(inner(f3v, v))
        return {"incoming_flux_abs": flux, "incoming_mass": mass}, \
               {"band_limit": _re(inner(f3v, v))}

    return ev, {}


def _build_pe4(engine, p, rows):
    F1 = smooth_char("rising", 1.0, order=p.get("order", 7))
    rise = smooth_char("rising", 1.0)
    bump = _deriv_profile(rise)
    alpha, beta, c0 = p["alpha"], p["beta"], p["c0"]

    def ev(t, f):
        tb = engine.toolbox
        tau = c0 * t ** (-beta)
        w = tb.multiply(engine.flux_window_values(F1, t ** alpha), f)
        f4w = engine.gamma_apply(w, rise, tau=tau)
        flux = t ** (-alpha) * _re(inner(tb.gamma(f4w), w))
        v = tb.multiply(engine.cutoff_values(F1, t ** alpha), f)
        edge = (1.0 / t) * _re(inner(engine.gamma_apply(v, bump, tau=tau), v))
        return {"flux": flux, "band_edge": edge}, {}

    return ev, {}


def _build_pe5(engine, p, rows):
    F1 = smooth_char("rising", 1.0, order=p.get("order", 7))
    fall = smooth_char("falling", 1.0)
    incoming = mirror(smooth_char("rising", 1.0))
    edge = _edge_profile(fall)
    alpha, beta, c1 = p["alpha"], p["beta"], p["c1"]

    def ev(t, f):
        tb = engine.toolbox
        tau = c1 * t ** (-beta)
        w = tb.multiply(engine.flux_window_values(F1, t ** alpha), f)
        inc = engine.gamma_apply(w, incoming, tau=tau)
        flux = t ** (-alpha) * abs(_re(inner(tb.gamma(inc), w)))
        mass = (1.0 / t) * _re(inner(engine.gamma_apply(w, fall, tau=tau), w))
        v = tb.multiply(engine.cutoff_values(F1, t ** alpha), f)
        band_edge = (1.0 / t) * abs(_re(inner(engine.gamma_apply(v, edge, tau=tau), v)))
        return {"incoming_flux_abs": flux, "band_mass": mass,
                "band_edge_abs": band_edge}, {}

    return ev, {}


def _build_boundary(engine, p, rows):
    """Dyadic-ladder boundary estimate.

    The ladder sums rescaled copies of the flux window and of the band
    edge over ratios (4/3)^j.  The target depth J0 comes from the gate
    inequality and is logged; the velocity ladder is additionally capped
    at the depth the grid's spectral resolution can support, and the
    record says so when that cap bites.
    """
    alpha, beta = p["alpha"], p["beta"]
    order = p.get("order", 7)
    F1 = smooth_char("rising", 1.0, order=order)
    step = ShiftedStep(1.0, 0.25, order=order)
    J0 = _scaling_ladder(alpha)
    ratios = [(4.0 / 3.0) ** j for j in range(J0 + 1)]

    lam_probe = np.linspace(1e-4, 1.2, 4801)

    def f1_ladder(lam):
        lam = np.asarray(lam, dtype=float)
        acc = np.zeros_like(lam)
        for ratio in ratios:
            x = ratio * lam
            prod = F1.value(x) * F1.deriv(x)
            acc = acc + np.sqrt(np.maximum(prod, 0.0))
        return acc

    norm1 = float(np.max(f1_ladder(lam_probe)))

    T = rows[-1][0]
    dk = math.pi / engine.grid.r_max
    floor = max(2.0 * dk, float(p.get("feature_floor", 0.0)))
    j_used = -1
    for j in range(J0 + 1):
        if 0.25 * 0.75 ** j * T ** (-beta) >= floor:
            j_used = j
    if j_used < 0:
        raise ObservableError(
            "grid cannot resolve even the coarsest velocity rung of the "
            "scaling ladder; enlarge the box or lower beta"
        )
    used = [(4.0 / 3.0) ** j for j in range(j_used + 1)]

    def f2_ladder(lam):
        lam = np.asarray(lam, dtype=float)
        acc = np.zeros_like(lam)
        for ratio in used:
            acc = acc + step.deriv(ratio * lam)
        return acc

    norm2 = float(np.max(f2_ladder(lam_probe)))

    def f2_ladder_deriv(lam):
        lam = np.asarray(lam, dtype=float)
        acc = np.zeros_like(lam)
        for ratio in used:
            acc = acc + ratio * step.d2(ratio * lam)
        return acc / norm2

    sup = tuple((0.75 ** (j + 1), 0.75 ** j) for j in range(j_used, -1, -1))
    ladder_prof = CallableProfile(fn=lambda lam: f2_ladder(lam) / norm2,
                                  dfn=f2_ladder_deriv,
                                  deriv_support=sup, asymptotes=(0.0, 0.0))
    feat = 0.25 * 0.75 ** j_used

    def ev(t, f):
        tb = engine.toolbox
        tau = t ** (-beta)
        scale = t ** alpha
        w = tb.multiply(f1_ladder(engine.gvals / scale) / norm1, f)
        band = (1.0 / t) * _re(inner(engine.gamma_apply(w, step, tau=tau), w))
        v = tb.multiply(engine.cutoff_values(F1, scale), f)
        edge = (1.0 / t) * _re(inner(
            engine.gamma_apply(v, ladder_prof, tau=tau, feature_width=feat), v))
        return {"scaling_band": band, "scaling_edge": edge}, {}

    extras = {"J0": J0, "j_used": j_used,
              "resolution_truncated": j_used < J0,
              "f1_ladder_norm": norm1, "f2_ladder_norm": norm2}
    return ev, extras


def _build_bab(engine, p, rows):
    a, b, c = p["a"], p["b"], p["c"]
    order = p.get("order", 7)
    F1 = smooth_char("rising", 1.0, order=order)
    rise = smooth_char("rising", 1.0)
    edge = _edge_profile(rise)

    def ev(t, f):
        tb = engine.toolbox
        lg = math.log(t)
        scale = math.sqrt(t) * lg ** a
        tau = c / (math.sqrt(t) * lg ** b)
        w = tb.multiply(engine.flux_window_values(F1, scale), f)
        f2w = engine.gamma_apply(w, rise, tau=tau)
        flux = (1.0 / scale) * _re(inner(tb.gamma(f2w), w))
        v = tb.multiply(engine.cutoff_values(F1, scale), f)
        band_edge = (1.0 / t) * _re(inner(engine.gamma_apply(v, edge, tau=tau), v))
        return {"log_flux": flux, "band_edge": band_edge}, {}

    return ev, {}


def _build_per2(engine, p, rows):
    alpha, beta, M = p["alpha"], p["beta"], p["M"]
    F1 = smooth_char("rising", 1.0, order=p.get("order", 7))

    def ev(t, f):
        s = t ** beta
        if 1.0 / s >= M:
            return {"cubic_flux": 0.0, "quadratic_flux": 0.0}, {}
        w = engine.toolbox.multiply(engine.flux_window_values(F1, t ** alpha), f)
        p3, feat = _abs_band_profile(3, s, M)
        p2, _ = _abs_band_profile(2, s, M)
        cubic = t ** (-alpha) * _re(inner(
            engine.gamma_apply(w, p3, tau=1.0, feature_width=feat), w))
        quad = (1.0 / t) * _re(inner(
            engine.gamma_apply(w, p2, tau=1.0, feature_width=feat), w))
        return {"cubic_flux": cubic, "quadratic_flux": quad}, {}

    return ev, {}


_BUILDERS = {
    "PE": _build_pe,
    "PE-2": _build_pe2,
    "PE-3": _build_pe3,
    "PE-4V2": _build_pe4,
    "PE-5": _build_pe5,
    "PE-boundary": _build_boundary,
    "Bab": _build_bab,
    "PE-r2": _build_per2,
}


# ---------------------------------------------------------------------------
# propagation integral driver
# ---------------------------------------------------------------------------

def _tail_increments(times: np.ndarray, running: np.ndarray) -> dict:
    T = times[-1]
    q1 = max(times[0], 0.25 * T)
    q2 = max(times[0], 0.5 * T)
    vals = np.interp([q1, q2, T], times, running)
    first = float(vals[1] - vals[0])
    second = float(vals[2] - vals[1])
    floor = 1e-12 * max(1.0, abs(float(running[-1])))
    if first > floor:
        ratio = second / first
    else:
        ratio = 0.0 if second <= floor else math.inf
    return {
        "first": first,
        "second": second,
        "ratio": float(ratio),
        "clipped": bool(q1 > 0.25 * T + 1e-12),
    }


def propagation_integral(run: Trajectory, preset: str, params: dict | None = None,
                         engine: PropagationEngine | None = None,
                         workers: int = 1) -> dict:
    """Running propagation integral for a named preset.

    Validates the preset's parameter gates, evaluates the weighted
    integrand snapshot by snapshot, and reports the trapezoid running
    integral together with the tail-increment comparison between
    [T/2, T] and [T/4, T/2].  A converging estimate has ratio under one.
    """
    if preset not in PRESETS:
        raise ObservableError(f"unknown preset {preset!r}; available: {', '.join(PRESETS)}")
    engine = engine or default_engine(run.grid)
    p = dict(_DEFAULTS[preset])
    p.update(params or {})
    case = _gate(preset, p)
    t0 = float(p.get("t0", engine.t0))
    if preset == "Bab" and t0 <= 1.0:
        raise ObservableError("Bab refuses: the log scales need snapshots with t > 1")
    rows, truncated = _snapshot_rows(run, t_min=t0)
    if len(rows) < 4:
        raise ObservableError(
            f"{preset} needs at least 4 snapshots past t0={t0:g}; got {len(rows)}"
        )
    ev, extras = _BUILDERS[preset](engine, p, rows)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda row: ev(*row), rows))
    else:
        results = [ev(t, f) for t, f in rows]

    times = np.asarray([t for t, _ in rows], dtype=float)
    names = list(results[0][0].keys())
    components = {name: [pieces[name] for pieces, _ in results] for name in names}
    diagnostics: dict = {}
    for name in results[0][1].keys():
        diagnostics[name] = [diag[name] for _, diag in results]
    integrand = np.sum([components[name] for name in names], axis=0)
    running = cumulative_trapezoid(integrand, times, initial=0.0)
    tail = _tail_increments(times, running)
    final = float(running[-1])
    if abs(final) <= 1e-14:
        fitted = 0.0
    else:
        half = len(times) // 2
        fitted = _loglog_slope(times[half:], np.abs(running[half:]))
    verdict = {
        "converged": bool(tail["ratio"] < 1.0),
        "tail_ratio": tail["ratio"],
        "fitted_exponent": fitted,
    }
    record = {
        "preset": preset,
        "case": case,
        "params": {k: v for k, v in p.items() if not k.startswith("_")},
        "times": times.tolist(),
        "components": components,
        "integrand": integrand.tolist(),
        "running_integral": running.tolist(),
        "tail_increments": tail,
        "verdict": verdict,
        "flags": {"scaled": t0 < 100.0, "t0": t0, "boundary_truncated": truncated},
    }
    if diagnostics:
        record["diagnostics"] = diagnostics
    record.update(extras)
    return record


# ---------------------------------------------------------------------------
# boundary flux
# ---------------------------------------------------------------------------

def boundary_limit_check(run: Trajectory, alpha: float,
                         F: Cutoff | None = None,
                         engine: PropagationEngine | None = None) -> dict:
    """Series <F' gamma F'> with the derivative window riding at t^alpha.

    The window derivative picks out the moving boundary shell, so the
    series should die off for dispersive runs while its running integral
    stays under a fitted C T^alpha envelope.
    """
    if not (1.0 / 3.0 < alpha < 1.0):
        raise ObservableError(f"boundary check needs alpha in (1/3, 1), got {alpha}")
    engine = engine or default_engine(run.grid)
    F = F if F is not None else smooth_char("rising", 1.0)
    rows, truncated = _snapshot_rows(run)
    if len(rows) < 4:
        raise ObservableError("boundary check needs at least 4 positive-time snapshots")
    tb = engine.toolbox
    times, values = [], []
    for t, f in rows:
        dvals = np.asarray(F.deriv(engine.gvals / t ** alpha), dtype=float)
        w = tb.multiply(dvals, f)
        times.append(t)
        values.append(_re(inner(tb.gamma(w), w)))
    arr_t = np.asarray(times)
    arr_v = np.asarray(values)
    running = cumulative_trapezoid(arr_v, arr_t, initial=0.0)
    quart = max(2, len(values) // 4)
    tail_mag = float(np.max(np.abs(arr_v[-quart:])))
    envelope = arr_t ** alpha
    half = len(times) // 2
    absI = np.abs(running[half:])
    denom = float(np.sum(envelope[half:] ** 2))
    fitted_C = float(np.sum(absI * envelope[half:]) / denom) if denom > 0 else 0.0
    fitted_exponent = _loglog_slope(arr_t[half:], absI)
    return {
        "alpha": alpha,
        "times": times,
        "values": values,
        "running_integral": running.tolist(),
        "tail_magnitude": tail_mag,
        "fitted_C": fitted_C,
        "fitted_exponent": fitted_exponent,
        "bound_ok": bool(fitted_exponent <= alpha + 0.1),
        "flags": {"boundary_truncated": truncated},
    }


# ---------------------------------------------------------------------------
# exterior Morawetz budget
# ---------------------------------------------------------------------------

def _bump_density(F1: Cutoff, lam: np.ndarray) -> np.ndarray:
    """Exact zeroth-order remainder of the exterior flux identity.

    In the scaled variable the remainder multiplier is
    F F''' + 3 F' F'' - (F F'' + F'^2)^2 / (F F'), supported on the
    window transition; the ratio is taken only where F F' is safely
    positive and the limit at both edges is finite.
    """
    Fv = np.asarray(F1.value(lam), dtype=float)
    F1v = np.asarray(F1.d1(lam), dtype=float)
    F2v = np.asarray(F1.d2(lam), dtype=float)
    F3v = np.asarray(F1.d3(lam), dtype=float)
    prod = Fv * F1v
    out = np.zeros_like(prod)
    ok = prod > 1e-30
    num = (Fv * F2v + F1v ** 2) ** 2
    out[ok] = Fv[ok] * F3v[ok] + 3.0 * F1v[ok] * F2v[ok] - num[ok] / prod[ok]
    return out


def exterior_morawetz(run: Trajectory, M: float = 20.0,
                      window: tuple | None = None,
                      engine: PropagationEngine | None = None,
                      contamination_tol: float = 1e-3) -> dict:
    """Both sides of the exterior flux identity on a fixed window at scale M.

    Left side: endpoint difference of <F1 gamma F1> with F1 rising at
    g(r)/M.  Right side: time integral of the weighted flux
    (4/M) |gamma sqrt(F1 F1') phi|^2, the M^-3 bump remainder, and the
    directly measured interaction term.  Both sides are independent
    measurements, so their mismatch estimates the discretization error.
    """
    if M < 4.0:
        raise ObservableError(
            f"exterior window needs M >= 4 so the transition clears the plateau, got {M}"
        )
    engine = engine or default_engine(run.grid)
    rows, _ = _snapshot_rows(run)
    if window is not None:
        lo, hi = window
        rows = [(t, f) for t, f in rows if lo <= t <= hi]
    if len(rows) < 4:
        raise ObservableError("exterior budget needs at least 4 snapshots in the window")
    for t, f in rows:
        frac = boundary_mass_fraction(f)
        if frac > contamination_tol:
            raise ObservableError(
                f"boundary contamination at t={t:g}: tail mass fraction "
                f"{frac:.2e} exceeds {contamination_tol:.0e}"
            )
    tb = engine.toolbox
    F1 = smooth_char("rising", 1.0)
    lam = engine.gvals / M
    F1_vals = np.asarray(F1.value(lam), dtype=float)
    G_vals = engine.flux_window_values(F1, M)
    W_vals = _bump_density(F1, lam) / M ** 3
    nl = run.nonlinearity

    times, edge, flux, bump, interaction = [], [], [], [], []
    for t, f in rows:
        w = tb.multiply(F1_vals, f)
        gw = tb.gamma(w)
        times.append(t)
        edge.append(_re(inner(gw, w)))
        flux.append((4.0 / M) * _l2sq(tb.gamma(tb.multiply(G_vals, f))))
        bump.append(expectation_multiplier(W_vals, f))
        if nl.is_free:
            interaction.append(0.0)
        else:
            nf = tb.multiply(nl.values(f, t), f)
            xf = tb.multiply(F1_vals, gw)
            interaction.append(2.0 * float(np.imag(inner(nf, xf))))
    arr_t = np.asarray(times)
    lhs = edge[-1] - edge[0]
    total = np.asarray(flux) + np.asarray(bump) + np.asarray(interaction)
    rhs = float(trapezoid(total, arr_t))
    gross = float(trapezoid(np.abs(flux), arr_t) + trapezoid(np.abs(bump), arr_t)
                  + trapezoid(np.abs(interaction), arr_t))
    scale = max(abs(lhs), gross, 1e-30)
    return {
        "M": M,
        "window": (times[0], times[-1]),
        "times": times,
        "edge_series": edge,
        "flux_series": flux,
        "bump_series": bump,
        "interaction_series": interaction,
        "lhs": lhs,
        "rhs": rhs,
        "residual": abs(lhs - rhs) / scale,
        "interaction_magnitude": float(trapezoid(np.abs(interaction), arr_t)),
        "flags": {"scaled": M < 100.0},
    }


# ---------------------------------------------------------------------------
# dilation growth bound
# ---------------------------------------------------------------------------

def dilation_bound_series(run: Trajectory, M: float = 20.0,
                          R: float | None = None,
                          engine: PropagationEngine | None = None,
                          window_tol: float = 1e-3) -> dict:
    """Series of <(A P+ + P+ A)/2> and <p P+ p> for the upper tanh band.

    A and the band commute, so the symmetrized product is the single
    multiplier lam P+(lam) on the dilation spectrum.  The kinetic series
    rides along for the saturation comparison of outgoing runs.
    """
    engine = engine or default_engine(run.grid)
    R = math.sqrt(M) if R is None else R
    mellin = engine.mellin
    tp = tanh_projection(M, R, 1)
    rows, _ = _snapshot_rows(run, include_zero=True)
    if not rows:
        raise ObservableError("run has no snapshots")
    times, ap_series, pp_series, kinetic = [], [], [], []
    for t, f in rows:
        outside = mellin.mass_outside(f)
        if outside > window_tol:
            raise ObservableError(
                f"Mellin window too narrow for the run's support at t={t:g}: "
                f"mass outside {outside:.2e}"
            )
        y = mellin.func_of_dilation(f, lambda lam: lam * tp(lam))
        ap_series.append(_re(inner(y, f)))
        v = engine.toolbox.abs_momentum(f)
        pp_series.append(_re(inner(mellin.func_of_dilation(v, tp), v)))
        kinetic.append(h1dot_norm(f) ** 2)
        times.append(t)
    return {
        "M": M,
        "R": R,
        "times": times,
        "ap_series": ap_series,
        "pp_series": pp_series,
        "kinetic_series": kinetic,
        "delta_ap": ap_series[-1] - ap_series[0],
        "flags": {"scaled": M < 100.0},
    }


def dilation_bound_sweep(run: Trajectory, Ms=(8.0, 16.0, 32.0),
                         engine: PropagationEngine | None = None) -> dict:
    """Endpoint growth |<AP+>_T - <AP+>_0| across band scales, with a fit."""
    engine = engine or default_engine(run.grid)
    deltas = []
    for M in Ms:
        rec = dilation_bound_series(run, M=M, engine=engine)
        deltas.append(abs(rec["delta_ap"]))
    slope = _loglog_slope(np.asarray(Ms, dtype=float), np.asarray(deltas))
    return {"Ms": list(Ms), "deltas": deltas, "fit_slope": slope}


# ---------------------------------------------------------------------------
# local smoothing
# ---------------------------------------------------------------------------

def local_smoothing_functional(run: Trajectory, kind: str = "morawetz",
                               window: tuple | None = None,
                               theta: float = 1.75, eps: float = 0.5,
                               engine: PropagationEngine | None = None) -> dict:
    """Windowed smoothing functional int int |D^{3/2} phi|^2 density dx dt.

    The three-halves derivative is the sine multiplier k^(3/2) on the
    reduced field; the density comes from the chosen repulsive vector
    field.  Quadratic in the field, linear in the window for free waves.
    """
    engine = engine or default_engine(run.grid)
    g = engine.grid
    if kind == "morawetz":
        density = MorawetzMultiplier(theta).commutator_density(g.r)
        params = {"theta": theta}
    elif kind == "inverse_range":
        density = InverseRangeMultiplier(eps).density_scale(g.r)
        params = {"eps": eps}
    else:
        raise ObservableError(
            f"unknown vector-field kind {kind!r}; use 'morawetz' or 'inverse_range'"
        )
    rows, _ = _snapshot_rows(run, include_zero=True)
    if window is not None:
        lo, hi = window
        rows = [(t, f) for t, f in rows if lo <= t <= hi]
    if len(rows) < 2:
        raise ObservableError("smoothing window holds fewer than 2 snapshots")
    times, inst = [], []
    for t, f in rows:
        a = g.coeffs(f.u)
        w = g.from_coeffs(g.k ** 1.5 * a)
        inst.append(float(4.0 * math.pi * g.h * np.sum(density * np.abs(w) ** 2)))
        times.append(t)
    arr_t = np.asarray(times)
    value = float(trapezoid(inst, arr_t))
    h1_initial = h1dot_norm(run.fields[0]) ** 2 + _l2sq(run.fields[0])
    length = times[-1] - times[0]
    return {
        "kind": kind,
        "params": params,
        "window": (times[0], times[-1]),
        "times": times,
        "integrand": inst,
        "value": value,
        "normalized": value / max(h1_initial * length, 1e-30),
    }


def smoothing_window_scan(run: Trajectory, windows, kind: str = "morawetz",
                          engine: PropagationEngine | None = None, **kw) -> dict:
    """Functional across nested windows plus a linear fit in window length."""
    engine = engine or default_engine(run.grid)
    lengths, values = [], []
    for window in windows:
        rec = local_smoothing_functional(run, kind=kind, window=window,
                                         engine=engine, **kw)
        lengths.append(rec["window"][1] - rec["window"][0])
        values.append(rec["value"])
    x = np.asarray(lengths)
    y = np.asarray(values)
    coef = np.polyfit(x, y, 1)
    fit = np.polyval(coef, x)
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"lengths": lengths, "values": values,
            "slope": float(coef[0]), "intercept": float(coef[1]), "r2": r2}


# ---------------------------------------------------------------------------
# virial balance
# ---------------------------------------------------------------------------

def virial_series(run: Trajectory, engine: PropagationEngine | None = None) -> dict:
    """Centered-difference d<A>/dt against the directly assembled right side.

    The right side is twice the kinetic energy minus the radial virial of
    the nonlinear term, r dN/dr weighted by |phi|^2.  Time-dependent
    potentials would add an explicit clock term that this series does not
    include, so such runs are refused.
    """
    nl = run.nonlinearity
    if nl.v_profile is not None:
        raise ObservableError(
            "time-dependent potential: the virial balance here has no "
            "explicit-t term, so a non-autonomous run is unsupported"
        )
    engine = engine or default_engine(run.grid)
    g = engine.grid
    tb = engine.toolbox
    rows, _ = _snapshot_rows(run, include_zero=True)
    if len(rows) < 3:
        raise ObservableError("virial series needs at least 3 snapshots")
    times = np.asarray([t for t, _ in rows])
    a_vals, kin, potv = [], [], []
    for t, f in rows:
        a_vals.append(_re(inner(tb.dilation(f), f)))
        kin.append(h1dot_norm(f) ** 2)
        if nl.is_free:
            potv.append(0.0)
        else:
            nv = np.asarray(nl.values(f, t), dtype=float)
            dnv = np.gradient(nv, g.r)
            potv.append(float(4.0 * math.pi * g.h * np.sum(g.r * dnv * np.abs(f.u) ** 2)))
    lhs = np.gradient(np.asarray(a_vals), times)
    rhs = 2.0 * np.asarray(kin) - np.asarray(potv)
    resid = lhs - rhs
    core = slice(1, -1)
    rms_resid = float(np.sqrt(np.mean(resid[core] ** 2)))
    rms_rhs = float(np.sqrt(np.mean(rhs[core] ** 2)))
    return {
        "times": times.tolist(),
        "dilation_series": a_vals,
        "lhs": lhs.tolist(),
        "rhs": rhs.tolist(),
        "kinetic": kin,
        "potential_virial": potv,
        "residual": resid.tolist(),
        "rms_relative": rms_resid / max(rms_rhs, 1e-30),
    }


# ---------------------------------------------------------------------------
# commutator locality
# ---------------------------------------------------------------------------

def commutator_locality_ratio(f: RadialField, s: float, tau: float = 1.0,
                              engine: PropagationEngine | None = None,
                              profile: Profile | None = None) -> float:
    """How much of i[-Lap, F(gamma/tau)] survives an exterior sandwich.

    The commutator lives where the weight still curves, so once the
    position window at scale s clears that region the sandwiched form
    should be a tiny fraction of the unconstrained one.  Returns
    |<F1 C F1>| / (|C f| |f|) with F1 rising at g(r)/s.
    """
    engine = engine or default_engine(f.grid)
    prof = profile if profile is not None else smooth_char("rising", 1.0)
    tb = engine.toolbox

    def apply_band(x):
        return engine.gamma_apply(x, prof, tau=tau)

    Cf = tb.heisenberg_free(apply_band, f)
    den = l2_norm(Cf) * l2_norm(f)
    w = tb.multiply(engine.cutoff_values(smooth_char("rising", 1.0), s), f)
    Cw = tb.heisenberg_free(apply_band, w)
    num = abs(inner(Cw, w))
    return float(num / max(den, 1e-300))
