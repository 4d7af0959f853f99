"""Functions of the weighted radial momentum and of the dilation generator.

Two functional calculi live here.

* gamma calculus: the unitary group e^{i a gamma} is a flow along the
  weight's gradient.  In reduced coordinates it is an explicit change of
  variables z(a, r) built from the antiderivative B of 1/g', exact outside
  the transition shell and tabulated inside it.  Smooth functions of gamma
  are then synthesized by a Fourier quadrature over group elements, with a
  smooth roll-off on the transform so the discarded tail is provably below
  tolerance.

* Mellin calculus: the dilation generator diagonalizes on a logarithmic
  grid after the unitary substitution (U f)(t) = e^{3t/2} f(e^t); functions
  of it are plain Fourier multipliers there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.fft import fft, ifft
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import make_interp_spline
from scipy.special import roots_legendre

from .grid import RadialField, RadialGrid, l2_norm
from .weights import Profile, WeightError


class QuadratureError(RuntimeError):
    """Raised when the spectral synthesis cannot meet its tail tolerance."""


class MellinWindowError(RuntimeError):
    """Raised when a field carries too much mass outside the log window."""


# ---------------------------------------------------------------------------
# flow map
# ---------------------------------------------------------------------------

class FlowMap:
    """Integrated flow of the vector field g'(r) d/dr on (1, infinity).

    B(r) = int_2^r ds/g'(s) is exactly r - 2 outside the transition and is
    tabulated on a doubly-exponential ladder inside it (B blows up toward
    the plateau like exp(1/(r-1)), so the table is graded in -log(r-1) and
    capped; points past the cap are dynamically frozen, which is also the
    exact behavior, since reaching them takes unbounded flow time).
    """

    def __init__(self, weight, v_max: float = 25.0, nv: int = 20001, b_cap: float = 1e12):
        self.weight = weight
        v = np.linspace(0.0, v_max, nv)
        eps = np.exp(-v)
        lam = 1.0 + eps
        dg = np.asarray(weight.dg(lam), dtype=float)
        integrand = eps / np.maximum(dg, 1e-300)
        b_down = -cumulative_trapezoid(integrand, v, initial=0.0)
        stop = int(np.searchsorted(-b_down, b_cap))
        stop = max(stop, 3)
        lam = lam[:stop]
        b_down = b_down[:stop]
        self._lam_tab = lam[::-1].copy()
        self._b_tab = b_down[::-1].copy()
        self.lam_min = float(self._lam_tab[0])
        self.b_min = float(self._b_tab[0])

    def B(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape, dtype=float)
        ext = r >= 2.0
        out[ext] = r[ext] - 2.0
        mid = (~ext) & (r > self.lam_min)
        out[mid] = np.interp(r[mid], self._lam_tab, self._b_tab)
        out[r <= self.lam_min] = self.b_min
        return out

    def Binv(self, b):
        b = np.asarray(b, dtype=float)
        out = np.empty(b.shape, dtype=float)
        ext = b >= 0.0
        out[ext] = 2.0 + b[ext]
        mid = (~ext) & (b > self.b_min)
        out[mid] = np.interp(b[mid], self._b_tab, self._lam_tab)
        out[b <= self.b_min] = self.lam_min
        return out

    def z(self, a: float, r):
        """Flow endpoint after time a, started from radius r."""
        r = np.asarray(r, dtype=float)
        out = np.array(r, dtype=float, copy=True)
        move = r > 1.0
        rm = r[move]
        br = self.B(rm)
        shifted = br + a
        frozen = (br <= self.b_min) | (shifted <= self.b_min)
        out[move] = np.where(frozen, rm, self.Binv(shifted))
        return out

    def z_block(self, a_vec, r):
        """Matrix z[a_i, r_j] sharing one B(r) evaluation; rows follow a_vec."""
        r = np.asarray(r, dtype=float)
        a_vec = np.asarray(a_vec, dtype=float)
        br = self.B(r)
        shifted = br[None, :] + a_vec[:, None]
        zz = self.Binv(shifted)
        frozen = (br[None, :] <= self.b_min) | (shifted <= self.b_min) | (r[None, :] <= 1.0)
        return np.where(frozen, r[None, :], zz)


def _reduced_spline(f: RadialField):
    """Quintic spline of the reduced profile with a pinned origin knot."""
    g = f.grid
    knots = np.concatenate(([0.0], g.r))
    vals = np.concatenate(([0.0 + 0.0j], f.u))
    return make_interp_spline(knots, vals, k=5)


def gamma_group(flow: FlowMap, f: RadialField, a: float,
                leak_tol: float = 1e-8) -> RadialField:
    """Apply the unitary group element e^{i a gamma} to a field.

    Reduced action: u(r) -> u(z(a, r)) * sqrt(g'(z)/g'(r)), identity on the
    plateau.  Samples pushed past the box edge are zero-filled and the
    resulting norm deficit is flagged on the output field.
    """
    g = f.grid
    r = g.r
    z = flow.z(a, r)
    spl = _reduced_spline(f)
    unew = np.zeros(g.n, dtype=np.complex128)
    inside = z <= g.r_max
    unew[inside] = spl(z[inside])
    dgr = np.asarray(flow.weight.dg(r), dtype=float)
    dgz = np.asarray(flow.weight.dg(z), dtype=float)
    amp = np.ones_like(r)
    live = (r > 1.0) & (dgr > 1e-120) & (z != r)
    amp[live] = np.sqrt(dgz[live] / dgr[live])
    unew *= amp
    out = RadialField(g, unew)
    out.u[-1] = 0.0
    deficit = abs(l2_norm(f) - l2_norm(out))
    ref = max(l2_norm(f), 1e-300)
    if deficit / ref > leak_tol:
        out.flags["boundary_leak"] = deficit / ref
    return out


# ---------------------------------------------------------------------------
# profile Fourier weights
# ---------------------------------------------------------------------------

def profile_hat_deriv(profile: Profile, tau: float, s):
    """Fourier transform (1/2pi) int h'(lam) e^{-i lam s} dlam for h = profile(./tau).

    Composite Gauss-Legendre over the (compact) derivative support, with the
    panel count tied to the largest phase so oscillations stay resolved.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape, dtype=np.complex128)
    s_max = float(np.max(np.abs(s))) if s.size else 0.0
    nodes8, weights8 = roots_legendre(8)
    for lo, hi in profile.deriv_support:
        lo_t, hi_t = lo * tau, hi * tau
        width = hi_t - lo_t
        panels = max(8, int(np.ceil(width * s_max / 5.0)))
        edges = np.linspace(lo_t, hi_t, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        x = (mid[:, None] + half[:, None] * nodes8[None, :]).ravel()
        w = (half[:, None] * weights8[None, :]).ravel()
        hp = np.asarray(profile.deriv(x / tau), dtype=float) / tau
        phase = np.exp(-1j * np.outer(s, x))
        out += phase @ (w * hp)
    return out / (2.0 * np.pi)


@dataclass(frozen=True)
class SynthesisPlan:
    """Precomputed quadrature data for one (profile, tau) pair."""

    s_nodes: np.ndarray
    weights: np.ndarray          # w_hat(s_k) * taper * ds
    offset: float                # affine part (h(+inf)+h(-inf))/2
    window: float
    tail_estimate: float


class GammaCalculus:
    """Synthesizes smooth functions of gamma through the explicit flow."""

    def __init__(self, grid: RadialGrid, weight, flow: FlowMap | None = None):
        self.grid = grid
        self.weight = weight
        self.flow = flow if flow is not None else FlowMap(weight)
        self._plans: dict = {}
        self._dg_r = np.asarray(weight.dg(grid.r), dtype=float)
        self._b_r = self.flow.B(grid.r)

    # -- quadrature plan ---------------------------------------------------

    def plan(self, profile: Profile, tau: float = 1.0, n_nodes: int = 2048,
             window_factor: float = 40.0, tail_tol: float = 1e-8) -> SynthesisPlan:
        key = (profile, round(float(tau), 12), n_nodes, window_factor)
        hit = self._plans.get(key)
        if hit is not None:
            return hit
        if not profile.deriv_support:
            plan = SynthesisPlan(
                s_nodes=np.zeros(0), weights=np.zeros(0),
                offset=0.5 * (profile.asymptotes[0] + profile.asymptotes[1]),
                window=0.0, tail_estimate=0.0,
            )
            self._plans[key] = plan
            return plan
        w_min = min(hi - lo for lo, hi in profile.deriv_support) * tau
        if w_min <= 0:
            raise QuadratureError("profile has a degenerate transition")
        S = window_factor / w_min
        ds = 2.0 * S / n_nodes
        s = -S + ds * (np.arange(n_nodes) + 0.5)
        sigma = S / 4.3
        taper = np.exp(-((s / sigma) ** 2))
        what = profile_hat_deriv(profile, tau, s) / (1j * s)
        weights = what * taper * ds
        # tail of the tapered transform past the window
        st = np.geomspace(S, 3.0 * S, 48)
        wt = np.abs(profile_hat_deriv(profile, tau, st) / (1j * st)) * np.exp(-((st / sigma) ** 2))
        tail = 2.0 * float(trapezoid(wt, st))
        sup_h = max(1.0, abs(profile.asymptotes[0]), abs(profile.asymptotes[1]))
        if tail > tail_tol * sup_h:
            raise QuadratureError(
                f"spectral tail {tail:.3e} exceeds tolerance {tail_tol:.1e}; "
                "widen the synthesis window or smooth the profile"
            )
        plan = SynthesisPlan(
            s_nodes=s, weights=weights,
            offset=0.5 * (profile.asymptotes[0] + profile.asymptotes[1]),
            window=S, tail_estimate=tail,
        )
        self._plans[key] = plan
        return plan

    # -- application ---------------------------------------------------------

    def func_of_gamma(self, f: RadialField, profile: Profile, tau: float = 1.0,
                      n_nodes: int = 2048, window_factor: float = 40.0,
                      tail_tol: float = 1e-8, chunk: int = 256) -> RadialField:
        """h(gamma) f with h(lam) = profile(lam / tau)."""
        plan = self.plan(profile, tau, n_nodes, window_factor, tail_tol)
        g = self.grid
        acc = plan.offset * f.u.astype(np.complex128)
        if plan.s_nodes.size == 0:
            return RadialField(g, acc)
        spl = _reduced_spline(f)
        r = g.r
        br = self._b_r
        dgr = self._dg_r
        for i0 in range(0, plan.s_nodes.size, chunk):
            sk = plan.s_nodes[i0: i0 + chunk]
            wk = plan.weights[i0: i0 + chunk]
            shifted = br[None, :] + sk[:, None]
            zz = self.flow.Binv(shifted)
            frozen = (
                (br[None, :] <= self.flow.b_min)
                | (shifted <= self.flow.b_min)
                | (r[None, :] <= 1.0)
            )
            zz = np.where(frozen, r[None, :], zz)
            vals = np.where(zz <= g.r_max, spl(np.minimum(zz, g.r_max)), 0.0)
            dgz = np.asarray(self.weight.dg(zz), dtype=float)
            amp = np.where(
                frozen | (dgr[None, :] <= 1e-120),
                1.0,
                np.sqrt(dgz / np.maximum(dgr[None, :], 1e-120)),
            )
            acc = acc + wk @ (vals * amp)
        out = RadialField(g, acc)
        out.u[-1] = 0.0
        return out


# ---------------------------------------------------------------------------
# Mellin calculus for the dilation generator
# ---------------------------------------------------------------------------

class MellinCalculus:
    """Functions of the dilation generator A = (x.p + p.x)/2 on radial fields.

    Mapping a field to the log axis with (U phi)(t) = e^{3t/2} phi(e^t)
    turns A into -i d/dt, so m(A) is the Fourier multiplier m(lambda) on a
    uniform grid in t = log r.
    """

    def __init__(self, grid: RadialGrid, r_lo: float | None = None,
                 n_log: int | None = None):
        self.grid = grid
        self.r_lo = float(r_lo) if r_lo is not None else 1e-3 * grid.r_max
        if not 0.0 < self.r_lo < grid.r_max:
            raise WeightError(f"log window start must lie in (0, r_max), got {self.r_lo}")
        self.n_log = int(n_log) if n_log is not None else 2 * grid.n
        t_lo, t_hi = np.log(self.r_lo), np.log(grid.r_max)
        self.dt_log = (t_hi - t_lo) / self.n_log
        self.t = t_lo + self.dt_log * np.arange(self.n_log)
        self.rho = np.exp(self.t)
        self.lam = 2.0 * np.pi * np.fft.fftfreq(self.n_log, d=self.dt_log)

    def mass_outside(self, f: RadialField) -> float:
        below = f.grid.r < self.r_lo
        num = float(np.sum(np.abs(f.u[below]) ** 2))
        den = float(np.sum(np.abs(f.u) ** 2))
        return num / den if den > 0 else 0.0

    def to_log(self, f: RadialField) -> np.ndarray:
        """(U phi)(t_i) = sqrt(rho_i) * u(rho_i); unitary up to resolution."""
        spl = _reduced_spline(f)
        return np.sqrt(self.rho) * spl(self.rho)

    def from_log(self, psi: np.ndarray, out_grid: RadialGrid | None = None) -> RadialField:
        g = out_grid if out_grid is not None else self.grid
        spl = make_interp_spline(self.t, psi, k=5)
        u = np.zeros(g.n, dtype=np.complex128)
        live = (g.r >= self.rho[0]) & (g.r <= self.rho[-1])
        u[live] = spl(np.log(g.r[live])) / np.sqrt(g.r[live])
        u[-1] = 0.0
        return RadialField(g, u)

    def log_l2(self, psi: np.ndarray) -> float:
        return float(np.sqrt(4.0 * np.pi * self.dt_log * np.sum(np.abs(psi) ** 2)))

    def func_of_dilation(self, f: RadialField, multiplier: Callable,
                         window_tol: float = 1e-6) -> RadialField:
        frac = self.mass_outside(f)
        if frac > window_tol:
            raise MellinWindowError(
                f"mass fraction {frac:.3e} below r = {self.r_lo:g} exceeds the "
                f"log-window tolerance {window_tol:.1e}"
            )
        psi = self.to_log(f)
        spec = fft(psi)
        spec *= np.asarray(multiplier(self.lam))
        return self.from_log(ifft(spec))


@dataclass(frozen=True)
class TanhProjection:
    """Smooth spectral half-space projection 0.5*(1 + sign*tanh((lam - sign*M)/R))."""

    M: float
    R: float
    sign: int = +1

    def __post_init__(self):
        if self.sign not in (+1, -1):
            raise WeightError("sign must be +1 (outgoing) or -1 (incoming)")
        if not self.M > 0:
            raise WeightError(f"threshold M must be positive, got {self.M}")
        if not 2.0 <= self.R <= self.M / 2.0:
            raise WeightError(
                f"projection width R must satisfy 2 <= R <= M/2, got R={self.R}, M={self.M}"
            )

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        return 0.5 * (1.0 + self.sign * np.tanh((lam - self.sign * self.M) / self.R))


def tanh_projection(M: float, R: float | None = None, sign: int = +1) -> TanhProjection:
    if R is None:
        R = max(2.0, np.sqrt(M))
    return TanhProjection(M=float(M), R=float(R), sign=sign)


def high_band_multiplier(M: float, R: float) -> Callable:
    """P+ + P-: the symmetric high-|lambda| tail weight."""
    p_out = tanh_projection(M, R, +1)
    p_in = tanh_projection(M, R, -1)
    return lambda lam: p_out(lam) + p_in(lam)


def p_plus_p_expectation(f: RadialField, mellin: MellinCalculus,
                         M: float, R: float | None = None) -> float:
    """<p P+(A) p> for a radial field, via the vector-component reduction.

    The momentum field of a radial phi has profile phi'(r) along the radial
    frame, on which the dilation generator acts component-wise, so the
    expectation collapses to a single radial pairing with u = r phi'.
    """
    from .grid import inner  # local import to avoid cycle at module load

    g = f.grid
    du = g.deriv(f.u)
    psi = RadialField(g, du - f.u / g.r)
    proj = tanh_projection(M, R, +1)
    return float(np.real(inner(mellin.func_of_dilation(psi, proj), psi)))


def highlow_leakage(f: RadialField, g_field: RadialField, mellin: MellinCalculus,
                    N: float, M: float, R: float | None = None,
                    band_floor: float = 1e-3) -> dict:
    """Leakage of a product of N-band-limited factors past dilation scale M.

    The product transform is formed on the log grid through the exact
    substitution identity U(f g)(t) = e^{-3t/2} (U f)(t) (U g)(t); going
    back through the radial grid would alias the small-radius content the
    band filter spreads there.  The band edge is a tanh roll-off no sharper
    than the grid's spectral resolution: a transition under one lambda
    sample acts as a hard cutoff whose ringing, squared in the product and
    amplified by e^{-3t/2}, would swamp the quantity being measured.
    """
    if R is None:
        R = max(2.0, np.sqrt(M))
    dlam = 2.0 * np.pi / (mellin.n_log * mellin.dt_log)
    r_band = max(N / 4.0, 2.0 * dlam)
    band_vals = 0.25 * (1.0 - np.tanh((mellin.lam - N) / r_band)) \
                     * (1.0 - np.tanh((-mellin.lam - N) / r_band))
    pieces = []
    for orig, name in ((f, "first"), (g_field, "second")):
        frac = mellin.mass_outside(orig)
        if frac > 1e-6:
            raise MellinWindowError(
                f"mass fraction {frac:.3e} of the {name} factor lies below "
                f"r = {mellin.r_lo:g}"
            )
        psi = mellin.to_log(orig)
        lim = ifft(fft(psi) * band_vals)
        if mellin.log_l2(lim) < band_floor * mellin.log_l2(psi):
            raise MellinWindowError(
                f"band limiting to |lambda| <= {N:g} leaves under {band_floor:.0e} "
                f"of the {name} factor's mass"
            )
        pieces.append(lim)
    prod = np.exp(-1.5 * mellin.t) * pieces[0] * pieces[1]
    spec = fft(prod)
    den = float(np.sqrt(np.sum(np.abs(spec) ** 2)))
    high_vals = np.asarray(high_band_multiplier(M, R)(mellin.lam))
    num = float(np.sqrt(np.sum(np.abs(spec * high_vals) ** 2)))
    return {
        "N": N, "M": M, "R": R,
        "product_norm": mellin.log_l2(prod),
        "leakage": num / max(den, 1e-300),
    }
