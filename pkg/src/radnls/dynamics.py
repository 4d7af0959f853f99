"""Strang-split evolution of the radial NLS with a gated interaction registry.

The splitting alternates an exact free drift (diagonal in the sine basis)
with an exact interaction kick: every registered interaction is a real
multiplier built from |phi|, r, and t, so the kick is a pure phase and
conserves mass to roundoff by construction.  Time-dependent potentials are
sampled at the step midpoint in both half-kicks, keeping the scheme second
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .grid import (
    RadialField,
    RadialGrid,
    boundary_mass_fraction,
    free_evolve,
    h1_norm,
    h1dot_norm,
    l2_norm,
)
from .weights import ShiftedStep


class NonlinearityError(ValueError):
    """Raised when interaction parameters violate their gates."""


class NumericalAbort(RuntimeError):
    """Raised when the evolution leaves its validity envelope (NaN, H1 blowup)."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """Registry of interaction terms N(phi) = nhat(|phi|, r, t) * phi.

    nhat = a|phi|^p - b|phi|^m/(1+|phi|^(m-n)) + V(r,t) + W(r) f(|phi|),
    with V = v_amp (1+r)^(-q) v_profile(t) and W a Gaussian envelope.
    All couplings live behind the gates stated in the registry contract.
    """

    a: float = 0.0
    p: float = 2.0
    b: float = 0.0
    m: float = 3.0
    n: float = 1.0
    v_amp: float = 0.0
    q: float = 3.0
    v_profile: Callable[[float], float] | None = None
    w_amp: float = 0.0
    w_width: float = 1.0
    f_kind: str = "linear"

    def __post_init__(self):
        if self.a < 0:
            raise NonlinearityError(f"power coupling a must be >= 0, got {self.a}")
        if self.a > 0 and not (4.0 / 3.0 < self.p < 4.0):
            raise NonlinearityError(
                f"power exponent p must lie in (4/3, 4), got {self.p}"
            )
        if self.b < 0:
            raise NonlinearityError(f"saturated coupling b must be >= 0, got {self.b}")
        if self.b > 0:
            if not self.m > 4.0 / 3.0:
                raise NonlinearityError(
                    f"saturated exponent m must exceed 4/3, got {self.m}"
                )
            if not self.n < 4.0:
                raise NonlinearityError(
                    f"saturated exponent n must be below 4, got {self.n}"
                )
            if self.n > self.m:
                raise NonlinearityError(
                    f"saturation requires n <= m, got n={self.n} > m={self.m}"
                )
            if self.n < 0:
                raise NonlinearityError(f"saturated exponent n must be >= 0, got {self.n}")
        if self.v_amp != 0.0 and not self.q > 1.0:
            raise NonlinearityError(
                f"potential decay q must exceed 1, got {self.q}"
            )
        if self.w_amp != 0.0 and self.f_kind not in ("linear", "cubic"):
            raise NonlinearityError(
                f"amplitude profile kind must be 'linear' or 'cubic', got {self.f_kind!r}"
            )

    @property
    def is_free(self) -> bool:
        return self.a == 0.0 and self.b == 0.0 and self.v_amp == 0.0 and self.w_amp == 0.0

    def nhat(self, rho: np.ndarray, r: np.ndarray, t: float) -> np.ndarray:
        """The real interaction multiplier evaluated at amplitude rho = |phi|."""
        out = np.zeros_like(rho)
        if self.a != 0.0:
            out = out + self.a * rho**self.p
        if self.b != 0.0:
            if self.m == self.n:
                out = out - 0.5 * self.b * rho**self.m
            else:
                out = out - self.b * rho**self.m / (1.0 + rho ** (self.m - self.n))
        if self.v_amp != 0.0:
            mod = self.v_profile(t) if self.v_profile is not None else 1.0
            out = out + self.v_amp * mod * (1.0 + r) ** (-self.q)
        if self.w_amp != 0.0:
            w = self.w_amp * np.exp(-((r / self.w_width) ** 2))
            out = out + w * (rho if self.f_kind == "linear" else rho**3)
        return out

    def values(self, f: RadialField, t: float) -> np.ndarray:
        r = f.grid.r
        return self.nhat(np.abs(f.u) / r, r, t)

    def potential_energy_density(self, rho_sq: np.ndarray, r: np.ndarray, t: float) -> np.ndarray:
        """F(|phi|^2) with F(s) = int_0^s nhat(sqrt(sigma)) dsigma, pointwise in r."""
        out = np.zeros_like(rho_sq)
        if self.a != 0.0:
            out = out + (2.0 * self.a / (self.p + 2.0)) * rho_sq ** ((self.p + 2.0) / 2.0)
        if self.b != 0.0:
            if self.m == self.n:
                out = out - (self.b / (self.m + 2.0)) * rho_sq ** ((self.m + 2.0) / 2.0)
            else:
                out = out + self._saturated_antiderivative(rho_sq)
        if self.v_amp != 0.0:
            mod = self.v_profile(t) if self.v_profile is not None else 1.0
            out = out + self.v_amp * mod * (1.0 + r) ** (-self.q) * rho_sq
        if self.w_amp != 0.0:
            w = self.w_amp * np.exp(-((r / self.w_width) ** 2))
            if self.f_kind == "linear":
                out = out + w * (2.0 / 3.0) * rho_sq**1.5
            else:
                out = out + w * (2.0 / 5.0) * rho_sq**2.5
        return out

    def _saturated_antiderivative(self, rho_sq: np.ndarray) -> np.ndarray:
        smax = float(np.max(rho_sq))
        if smax == 0.0:
            return np.zeros_like(rho_sq)
        s = np.linspace(0.0, smax, 4097)
        integ = np.zeros_like(s)
        pos = s > 0
        integ[pos] = s[pos] ** (self.m / 2.0) / (1.0 + s[pos] ** ((self.m - self.n) / 2.0))
        from scipy.integrate import cumulative_trapezoid

        table = -self.b * cumulative_trapezoid(integ, s, initial=0.0)
        return np.interp(rho_sq, s, table)


def energy(f: RadialField, nl: NonlinearitySpec, t: float = 0.0) -> float:
    """Conserved energy ||grad phi||^2 + int F(|phi|^2) dx (modulo V(t) drift)."""
    g = f.grid
    rho_sq = (np.abs(f.u) / g.r) ** 2
    dens = nl.potential_energy_density(rho_sq, g.r, t)
    potential = float(4.0 * np.pi * g.h * np.sum(g.r**2 * dens))
    return h1dot_norm(f) ** 2 + potential


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def gaussian_data(grid: RadialGrid, amplitude: float = 1.0, width: float = 1.0,
                  center: float = 0.0, normalize: bool = False) -> RadialField:
    """Radial Gaussian (center 0) or Gaussian shell (center > 0)."""
    phi = amplitude * np.exp(-((grid.r - center) ** 2) / (2.0 * width**2))
    f = RadialField.from_reduced(grid, grid.r * phi)
    if normalize:
        f = f * (1.0 / l2_norm(f))
    return f


def band_limited_data(grid: RadialGrid, k_lo: float, k_hi: float,
                      center: float = 20.0, width: float = 4.0,
                      amplitude: float = 1.0, edge_fraction: float = 0.125) -> RadialField:
    """Outgoing modulated shell with momentum content confined to [k_lo, k_hi].

    Built as a traveling Gaussian shell in the reduced profile and then
    band-passed with a product of smoothstep edges; the upper edge width is
    edge_fraction * k_hi, so the maximal group speed stays below
    2 k_hi (1 + edge_fraction).
    """
    k0 = 0.5 * (k_lo + k_hi)
    u = amplitude * np.exp(-((grid.r - center) ** 2) / (2.0 * width**2)
                           + 1j * k0 * (grid.r - center))
    u[-1] = 0.0
    rise = ShiftedStep(center=k_lo, width=k_lo / 2.0)
    fall = ShiftedStep(center=k_hi * (1.0 + edge_fraction), width=k_hi * edge_fraction)
    window = rise.value(grid.k) * (1.0 - fall.value(grid.k))
    a = grid.coeffs(u) * window
    return RadialField(grid, grid.from_coeffs(a))


def self_similar_data(grid: RadialGrid, scale: float = 5.0,
                      amplitude: float = 1.0) -> RadialField:
    """Mass-invariant family phi(r) = A s^(-3/2) exp(-(r/s)^2/2)."""
    phi = amplitude * scale**-1.5 * np.exp(-((grid.r / scale) ** 2) / 2.0)
    return RadialField.from_reduced(grid, grid.r * phi)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Snapshots of one run plus the monitor series recorded alongside."""

    grid: RadialGrid
    nonlinearity: NonlinearitySpec
    dt: float
    times: list
    fields: list
    mass: list = dc_field(default_factory=list)
    energy_series: list = dc_field(default_factory=list)
    h1: list = dc_field(default_factory=list)
    boundary: list = dc_field(default_factory=list)
    validity_end: float | None = None
    meta: dict = dc_field(default_factory=dict)

    def field_at(self, t: float) -> RadialField:
        for ti, f in zip(self.times, self.fields):
            if abs(ti - t) <= 1e-9 * max(1.0, abs(t)):
                return f
        raise ValueError(f"no snapshot at t = {t:g}; have {self.times}")

    @property
    def initial_mass(self) -> float:
        return self.mass[0] if self.mass else l2_norm(self.fields[0]) ** 2

    def record(self, t: float, f: RadialField, boundary_threshold: float) -> None:
        self.times.append(t)
        self.fields.append(f)
        self.mass.append(l2_norm(f) ** 2)
        self.energy_series.append(energy(f, self.nonlinearity, t))
        self.h1.append(h1_norm(f))
        frac = boundary_mass_fraction(f)
        self.boundary.append(frac)
        if self.validity_end is None and frac > boundary_threshold:
            self.validity_end = t


def free_trajectory(grid: RadialGrid, phi0: RadialField, times: Sequence[float],
                    boundary_threshold: float = 1e-6) -> Trajectory:
    """Exact free run sampled at the given times (no stepping error)."""
    nl = NonlinearitySpec()
    traj = Trajectory(grid=grid, nonlinearity=nl, dt=0.0, times=[], fields=[])
    for t in times:
        traj.record(float(t), free_evolve(phi0, float(t)), boundary_threshold)
    return traj


def evolve(grid: RadialGrid, nl: NonlinearitySpec, phi0: RadialField,
           t_final: float, dt: float, snapshot_stride: int = 100,
           snapshot_times: Sequence[float] | None = None,
           boundary_threshold: float = 1e-6,
           h1_cap_factor: float = 100.0) -> Trajectory:
    """Strang-split run to t_final; snapshots by stride or an explicit list."""
    if dt <= 0 or t_final <= 0:
        raise NonlinearityError("t_final and dt must be positive")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * t_final:
        raise NonlinearityError(
            f"t_final = {t_final} is not an integer number of steps of dt = {dt}"
        )
    snap_steps: set[int] = set()
    if snapshot_times is not None:
        for t in snapshot_times:
            k = int(round(t / dt))
            if abs(k * dt - t) > 1e-9 * max(1.0, t):
                raise NonlinearityError(
                    f"snapshot time {t} is not a multiple of dt = {dt}"
                )
            snap_steps.add(k)
    else:
        snap_steps.update(range(0, n_steps + 1, max(1, snapshot_stride)))
    snap_steps.add(0)
    snap_steps.add(n_steps)

    traj = Trajectory(grid=grid, nonlinearity=nl, dt=dt, times=[], fields=[])
    u = phi0.u.copy()
    u[-1] = 0.0
    r = grid.r
    drift = np.exp(-1j * grid.k**2 * dt)
    h1_ref = h1_norm(phi0)
    if 0 in snap_steps:
        traj.record(0.0, RadialField(grid, u.copy()), boundary_threshold)

    for step in range(n_steps):
        t_mid = (step + 0.5) * dt
        if not nl.is_free:
            rho = np.abs(u) / r
            u = u * np.exp(-0.5j * dt * nl.nhat(rho, r, t_mid))
        a = grid.coeffs(u) * drift
        u = grid.from_coeffs(a)
        if not nl.is_free:
            rho = np.abs(u) / r
            u = u * np.exp(-0.5j * dt * nl.nhat(rho, r, t_mid))
        k = step + 1
        if k in snap_steps:
            t_now = k * dt
            if not np.all(np.isfinite(u.real)) or not np.all(np.isfinite(u.imag)):
                raise NumericalAbort(f"non-finite field at t = {t_now:g} (step {k})")
            f_now = RadialField(grid, u.copy())
            if h1_norm(f_now) > h1_cap_factor * max(h1_ref, 1e-300):
                raise NumericalAbort(
                    f"H1 norm exceeded {h1_cap_factor:g} x initial at t = {t_now:g}"
                )
            traj.record(t_now, f_now, boundary_threshold)
    return traj


# ---------------------------------------------------------------------------
# kinematic diagnostics
# ---------------------------------------------------------------------------

def cone_mass(f: RadialField, radius: float) -> float:
    """Mass inside {r <= radius} as a fraction of total mass."""
    sel = f.grid.r <= radius
    num = float(np.sum(np.abs(f.u[sel]) ** 2))
    den = float(np.sum(np.abs(f.u) ** 2))
    return num / den if den > 0 else 0.0


def velocity_scan(traj: Trajectory, speeds: Sequence[float]) -> dict:
    """Interior-cone mass fractions m(|x| <= v t) for each speed and snapshot."""
    rows = {"t": list(traj.times)}
    for v in speeds:
        rows[f"v={v:g}"] = [cone_mass(f, v * t) if t > 0 else 0.0
                            for t, f in zip(traj.times, traj.fields)]
    return rows


def exterior_mass(f: RadialField, radius: float) -> float:
    sel = f.grid.r >= radius
    num = float(np.sum(np.abs(f.u[sel]) ** 2))
    den = float(np.sum(np.abs(f.u) ** 2))
    return num / den if den > 0 else 0.0


def pseudo_conformal_norm(f: RadialField, t: float) -> float:
    """||(x + 2 i t grad) phi||, invariant under the free flow.

    Reduced form: the radial component profile is r phi + 2 i t phi', whose
    weighted profile w = r u + 2 i t (u' - u/r) carries the whole norm.
    """
    g = f.grid
    du = g.deriv(f.u)
    w = g.r * f.u + 2j * t * (du - f.u / g.r)
    return float(np.sqrt(4.0 * np.pi * g.h * np.sum(np.abs(w) ** 2)))


def strichartz_l2l6(traj: Trajectory) -> float:
    """Time-integrated L^6_x norm squared: int ||phi||_{L6}^2 dt over snapshots."""
    from scipy.integrate import trapezoid

    vals = []
    for f in traj.fields:
        g = f.grid
        sixth = 4.0 * np.pi * g.h * np.sum(np.abs(f.u) ** 6 / g.r**4)
        vals.append(sixth ** (1.0 / 3.0))
    return float(trapezoid(vals, traj.times))
