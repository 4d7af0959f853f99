"""Smooth interpolation weights and cutoff profiles.

The workhorse weight g interpolates between a constant plateau near the
origin and g(r) = r outside r = 2, with a C-infinity transition on [1, 2]
driven by a normalized bump: g'' = alpha on (1, 2), g'(2) = 1, and the
plateau value is fixed by continuity.  Cutoffs are polynomial smoothsteps
with exact 0/1 saturation; their first three derivatives are closed-form,
which the operator-calculus and identity modules rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline


class WeightError(ValueError):
    """Raised for invalid weight or cutoff parameters."""


# ---------------------------------------------------------------------------
# smoothstep polynomials
# ---------------------------------------------------------------------------

def _s2(s):
    return s**3 * (10.0 + s * (-15.0 + 6.0 * s))


def _s2_d1(s):
    return 30.0 * s**2 * (1.0 - s) ** 2


def _s2_d2(s):
    return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)


def _s2_d3(s):
    return 60.0 * (1.0 - 6.0 * s + 6.0 * s**2)


def _s3(s):
    return s**4 * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)))


def _s3_d1(s):
    return 140.0 * s**3 * (1.0 - s) ** 3


def _s3_d2(s):
    return 420.0 * s**2 * (1.0 - s) ** 2 * (1.0 - 2.0 * s)


def _s3_d3(s):
    return 840.0 * s * (1.0 - s) * (1.0 - 5.0 * s + 5.0 * s**2)


_STEPS = {
    5: (_s2, _s2_d1, _s2_d2, _s2_d3),
    7: (_s3, _s3_d1, _s3_d2, _s3_d3),
}


class Profile:
    """Interface shared by cutoffs and shifted steps.

    value/deriv are vectorized in the spectral variable; deriv_support lists
    the closed intervals where the derivative can be nonzero; asymptotes are
    the saturated values at -inf and +inf.
    """

    asymptotes: tuple[float, float] = (0.0, 0.0)
    deriv_support: tuple[tuple[float, float], ...] = ()

    def value(self, lam):
        raise NotImplementedError

    def deriv(self, lam):
        raise NotImplementedError

    def __call__(self, lam):
        return self.value(lam)


@dataclass(frozen=True)
class Cutoff(Profile):
    """Smooth characteristic function built from a smoothstep polynomial.

    kind 'rising' saturates to 1 above a with transition on [a/2, a];
    'falling' is its complement; 'window' is rising(a) - rising(b) and
    requires b > 4a so the two transitions cannot touch.
    """

    kind: str
    a: float
    b: float | None = None
    order: int = 7

    def __post_init__(self):
        if self.kind not in ("rising", "falling", "window"):
            raise WeightError(f"unknown cutoff kind {self.kind!r}")
        if self.order not in _STEPS:
            raise WeightError(f"cutoff order must be one of {sorted(_STEPS)}, got {self.order}")
        if not self.a > 0:
            raise WeightError(f"cutoff threshold a must be positive, got {self.a}")
        if self.kind == "window":
            if self.b is None:
                raise WeightError("window cutoff needs an upper threshold b")
            if not self.b > 4.0 * self.a:
                raise WeightError(
                    f"window thresholds must satisfy b > 4a; got a={self.a}, b={self.b}"
                )
        object.__setattr__(
            self,
            "asymptotes",
            {"rising": (0.0, 1.0), "falling": (1.0, 0.0), "window": (0.0, 0.0)}[self.kind],
        )
        sup = [(self.a / 2.0, self.a)]
        if self.kind == "window":
            sup.append((self.b / 2.0, self.b))
        object.__setattr__(self, "deriv_support", tuple(sup))

    def _edge(self, lam, a, diff):
        """diff-th derivative of the rising edge with transition [a/2, a]."""
        lam = np.asarray(lam, dtype=float)
        s = np.clip((2.0 * lam - a) / a, 0.0, 1.0)
        fn = _STEPS[self.order][diff]
        out = fn(s) * (2.0 / a) ** diff
        if diff > 0:
            inside = (lam > a / 2.0) & (lam < a)
            out = np.where(inside, out, 0.0)
        return out

    def _combine(self, lam, diff):
        if self.kind == "rising":
            return self._edge(lam, self.a, diff)
        if self.kind == "falling":
            base = self._edge(lam, self.a, diff)
            return (1.0 - base) if diff == 0 else -base
        lo = self._edge(lam, self.a, diff)
        hi = self._edge(lam, self.b, diff)
        return lo - hi

    def value(self, lam):
        return self._combine(lam, 0)

    def deriv(self, lam):
        return self._combine(lam, 1)

    def d1(self, lam):
        return self._combine(lam, 1)

    def d2(self, lam):
        return self._combine(lam, 2)

    def d3(self, lam):
        return self._combine(lam, 3)


def smooth_char(kind: str, a: float, b: float | None = None, order: int = 7) -> Cutoff:
    """Factory for smooth characteristic functions; validates thresholds."""
    return Cutoff(kind=kind, a=a, b=b, order=order)


@dataclass(frozen=True)
class ShiftedStep(Profile):
    """Smoothstep rising from 0 to 1 over [center - width, center].

    Unlike the scale-anchored Cutoff, the threshold may sit anywhere on the
    real line, which the signed gamma-band constructions need.
    """

    center: float
    width: float
    order: int = 7

    def __post_init__(self):
        if not self.width > 0:
            raise WeightError(f"step width must be positive, got {self.width}")
        object.__setattr__(self, "asymptotes", (0.0, 1.0))
        object.__setattr__(
            self, "deriv_support", ((self.center - self.width, self.center),)
        )

    def _eval(self, lam, diff):
        lam = np.asarray(lam, dtype=float)
        s = np.clip((lam - (self.center - self.width)) / self.width, 0.0, 1.0)
        out = _STEPS[self.order][diff](s) / self.width**diff
        if diff > 0:
            inside = (lam > self.center - self.width) & (lam < self.center)
            out = np.where(inside, out, 0.0)
        return out

    def value(self, lam):
        return self._eval(lam, 0)

    def deriv(self, lam):
        return self._eval(lam, 1)

    def d2(self, lam):
        return self._eval(lam, 2)


@dataclass(frozen=True)
class MirroredProfile(Profile):
    """p(-lambda); turns an upper-threshold profile into a lower one."""

    base: Profile

    def __post_init__(self):
        lo, hi = self.base.asymptotes
        object.__setattr__(self, "asymptotes", (hi, lo))
        sup = tuple(sorted((-b, -a) for (a, b) in self.base.deriv_support))
        object.__setattr__(self, "deriv_support", sup)

    def value(self, lam):
        return self.base.value(-np.asarray(lam, dtype=float))

    def deriv(self, lam):
        return -self.base.deriv(-np.asarray(lam, dtype=float))


def mirror(profile: Profile) -> MirroredProfile:
    return MirroredProfile(profile)


@dataclass(frozen=True)
class CallableProfile(Profile):
    """Ad hoc profile from explicit value/derivative callables."""

    fn: Callable
    dfn: Callable
    deriv_support: tuple[tuple[float, float], ...]
    asymptotes: tuple[float, float]

    def value(self, lam):
        return self.fn(np.asarray(lam, dtype=float))

    def deriv(self, lam):
        return self.dfn(np.asarray(lam, dtype=float))


def sqrt_ff_prime(cutoff: Cutoff) -> Callable:
    """Pointwise sqrt(F * F'): the standard flux window of a cutoff."""

    def val(lam):
        prod = cutoff.value(lam) * cutoff.deriv(lam)
        return np.sqrt(np.maximum(prod, 0.0))

    return val


# ---------------------------------------------------------------------------
# interpolation weight
# ---------------------------------------------------------------------------

def default_bump(x):
    """C-infinity bump on (1, 2), unnormalized; vanishes to all orders at ends."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 1.0) & (x < 2.0)
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (xi - 1.0) - 1.0 / (2.0 - xi))
    return out


def _default_bump_logderivs(x):
    """w', w'' for w = -1/(x-1) - 1/(2-x) on the open transition."""
    d1 = 1.0 / (x - 1.0) ** 2 - 1.0 / (2.0 - x) ** 2
    d2 = -2.0 / (x - 1.0) ** 3 - 2.0 / (2.0 - x) ** 3
    return d1, d2


class SmoothWeight:
    """The mollified radius: g(r) = plateau (r<=1), smooth (1<r<2), r (r>=2).

    Tables are built once at a fixed resolution and wrapped in clamped cubic
    splines; the transition profile and its first two derivatives are exact
    at the seams by construction (g'(2) = 1 to machine precision).
    """

    def __init__(self, bump: Callable | None = None, table_step: float = 1e-4):
        self._custom = bump is not None
        raw = bump if bump is not None else default_bump
        x = np.arange(1.0, 2.0 + table_step / 2, table_step)
        ax = np.asarray(raw(x), dtype=float)
        if np.any(ax < 0):
            raise WeightError("bump profile must be nonnegative on (1, 2)")
        if not (ax[0] == 0.0 and ax[-1] == 0.0):
            raise WeightError("bump profile must vanish at both transition endpoints")
        total = cumulative_trapezoid(ax, x, initial=0.0)
        if total[-1] <= 0:
            raise WeightError("bump profile must have positive mass on (1, 2)")
        self._norm = 1.0 / total[-1]
        self._x = x
        self._alpha = ax * self._norm
        dg = total * self._norm                      # g' on [1, 2], exact 0 -> 1
        g_rel = cumulative_trapezoid(dg, x, initial=0.0)
        self.plateau = 2.0 - g_rel[-1]               # continuity at r = 2
        g = self.plateau + g_rel
        self._g_spline = CubicSpline(x, g, bc_type=((1, 0.0), (1, 1.0)))
        self._dg_spline = CubicSpline(x, dg, bc_type=((1, 0.0), (1, 0.0)))
        self._alpha_spline = CubicSpline(x, self._alpha, bc_type=((1, 0.0), (1, 0.0)))

    # -- transition-profile derivatives ----------------------------------

    def _alpha_d1(self, x):
        if self._custom:
            return self._alpha_spline(x, 1)
        w1, _ = _default_bump_logderivs(x)
        return self._alpha_spline(x) * w1

    def _alpha_d2(self, x):
        if self._custom:
            return self._alpha_spline(x, 2)
        w1, w2 = _default_bump_logderivs(x)
        return self._alpha_spline(x) * (w2 + w1**2)

    def _piecewise(self, r, plateau_val, mid_fn, outer_fn):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape, dtype=float)
        lo = r <= 1.0
        hi = r >= 2.0
        mid = ~(lo | hi)
        out[lo] = plateau_val if np.isscalar(plateau_val) else plateau_val(r[lo])
        if np.any(mid):
            out[mid] = mid_fn(r[mid])
        if np.any(hi):
            out[hi] = outer_fn(r[hi])
        return out

    # -- public surface ---------------------------------------------------

    def g(self, r):
        return self._piecewise(r, self.plateau, self._g_spline, lambda x: x)

    def dg(self, r):
        return self._piecewise(r, 0.0, self._dg_spline, lambda x: np.ones_like(x))

    def d2g(self, r):
        return self._piecewise(r, 0.0, self._alpha_spline, lambda x: np.zeros_like(x))

    def d3g(self, r):
        return self._piecewise(r, 0.0, self._alpha_d1, lambda x: np.zeros_like(x))

    def d4g(self, r):
        return self._piecewise(r, 0.0, self._alpha_d2, lambda x: np.zeros_like(x))

    def laplacian_g(self, r):
        """Laplacian of g(|x|) in R^3: g'' + 2 g'/r."""
        return self._piecewise(
            r,
            0.0,
            lambda x: self._alpha_spline(x) + 2.0 * self._dg_spline(x) / x,
            lambda x: 2.0 / x,
        )

    def bilaplacian_g(self, r):
        """Double Laplacian of g(|x|): g'''' + 4 g'''/r; zero outside (1, 2)."""
        return self._piecewise(
            r,
            0.0,
            lambda x: self._alpha_d2(x) + 4.0 * self._alpha_d1(x) / x,
            lambda x: np.zeros_like(x),
        )

    def radial_hessian(self, r):
        """The rr-component g''; the Hessian's only nonconstant radial entry."""
        return self.d2g(r)


class SqrtShiftWeight:
    """Analytic comparison weight g(r) = sqrt(1 + r^2) with no plateau."""

    plateau = 1.0

    @staticmethod
    def g(r):
        r = np.asarray(r, dtype=float)
        return np.sqrt(1.0 + r**2)

    @staticmethod
    def dg(r):
        r = np.asarray(r, dtype=float)
        return r / np.sqrt(1.0 + r**2)

    @staticmethod
    def d2g(r):
        r = np.asarray(r, dtype=float)
        return (1.0 + r**2) ** -1.5

    @staticmethod
    def laplacian_g(r):
        r = np.asarray(r, dtype=float)
        return (3.0 + 2.0 * r**2) * (1.0 + r**2) ** -1.5

    @staticmethod
    def bilaplacian_g(r):
        r = np.asarray(r, dtype=float)
        return -15.0 * (1.0 + r**2) ** -3.5

    @staticmethod
    def radial_hessian(r):
        return SqrtShiftWeight.d2g(r)


@dataclass(frozen=True)
class MorawetzMultiplier:
    """Smoothed Morawetz vector-field profile f(r) = r / sqrt(r^2 + r^theta).

    theta = 2 - eps with small eps > 0; the repulsive commutator density
    concentrates at the origin like eps * r^(eps - 1) and the profile passes
    through 1/sqrt(2) at r = 1 for every theta.
    """

    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < 2.0:
            raise WeightError(f"theta must lie in (0, 2), got {self.theta}")

    @property
    def eps(self) -> float:
        return 2.0 - self.theta

    def f(self, r):
        r = np.asarray(r, dtype=float)
        return r / np.sqrt(r**2 + r**self.theta)

    def commutator_density(self, r):
        r = np.asarray(r, dtype=float)
        e = self.eps
        return 0.5 * e * r ** (e / 2.0 - 1.0) * (r**e + 1.0) ** -1.5


@dataclass(frozen=True)
class InverseRangeMultiplier:
    """Repulsive multiplier f(r) = (r^(1-eps) <r>^eps)^(-1) for 0 < eps < 1."""

    eps: float

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise WeightError(f"eps must lie in (0, 1), got {self.eps}")

    def f(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 / (r ** (1.0 - self.eps) * (1.0 + r**2) ** (self.eps / 2.0))

    def density_scale(self, r):
        """Leading small-r scale of the induced commutator density."""
        r = np.asarray(r, dtype=float)
        return self.eps * r ** (self.eps - 1.0)


def weight_table(weight, lam_max: float = 3.0, step: float = 1e-4):
    """Sampled (lambda, g, g', g'') rows for export and plotting."""
    lam = np.arange(0.0, lam_max + step / 2, step)
    return lam, weight.g(lam), weight.dg(lam), weight.d2g(lam)
