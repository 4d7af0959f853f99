"""Dense-matrix oracle for the algebraic identities behind the observables.

Everything here runs on small seeded Hermitian matrices, where commutators
and functions of operators are exact (eigendecomposition), so the identities
the field-level engine relies on can be verified to roundoff, and the
quadrature-based representations can be checked against their exact
counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .grid import RadialField, inner
from .opfunc import profile_hat_deriv
from .weights import Cutoff, Profile, smooth_char


def random_hermitian(dim: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """Seeded GUE-like Hermitian matrix with spectrum on the order of scale."""
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * (m + m.conj().T) / (2.0 * np.sqrt(dim))


def comm(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x @ y - y @ x


def _fro(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


@dataclass
class SymmetrizationReport:
    dim: int
    scale: float
    residuals: dict
    bound: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    @property
    def holds(self) -> bool:
        return self.max_residual <= self.bound


def check_symmetrization(A: np.ndarray, B: np.ndarray, C: np.ndarray,
                         require_commuting: bool = True) -> SymmetrizationReport:
    """Frobenius residuals of the five symmetrization identities.

    The identities that involve C assume [A, C] = 0, which callers should
    guarantee by building C as a polynomial in A; the precondition is
    checked and reported as an error rather than silently polluting the
    residuals.
    """
    dim = A.shape[0]
    scale = max(1.0, *(np.linalg.norm(m, 2) for m in (A, B, C)))
    if require_commuting:
        if _fro(comm(A, C)) > dim * 1e-12 * scale**2:
            raise ValueError("C must commute with A for the squeezed identities")
    ab = comm(A, B)
    res = {
        "ab2a": _fro(A @ B @ B @ A - (B @ A @ A @ B + comm(ab, B) @ A + B @ comm(ab, A))),
        "a2bc2_product": _fro(
            A @ A @ B @ C @ C
            - ((A @ C) @ B @ (A @ C) + A @ A @ comm(B, C) @ C + A @ C @ ab @ C)
        ),
        "abba": _fro(A @ A @ B + B @ A @ A - (2.0 * A @ B @ A + comm(A, comm(A, B)))),
        "abc_cba": _fro(A @ B @ C - C @ B @ A - (A @ comm(B, C) + C @ ab)),
        "a2bc2_symmetrized": _fro(
            A @ A @ B @ C @ C + C @ C @ B @ A @ A
            - (2.0 * (A @ C) @ B @ (A @ C) + _squeezed_remainder(A, B, C))
        ),
    }
    return SymmetrizationReport(
        dim=dim, scale=scale, residuals=res, bound=dim**2 * 1e-12 * scale**3
    )


def _squeezed_remainder(A, B, C):
    """R(A,B,C) with every double commutator squeezed by A or C."""
    return (
        A @ comm(comm(A, B), C) @ C
        + C @ comm(comm(C, B), A) @ A
        + A @ comm(C, comm(C, B)) @ A
        + C @ comm(A, comm(A, B)) @ C
    )


def symmetrization_suite(n_cases: int = 100, seed: int = 2026,
                         dims=(8, 16)) -> list[SymmetrizationReport]:
    """Seeded sweep used by the acceptance gate; C is a quadratic in A."""
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(n_cases):
        dim = int(rng.integers(dims[0], dims[1] + 1))
        case_seed = int(rng.integers(0, 2**31 - 1))
        A = random_hermitian(dim, case_seed)
        B = random_hermitian(dim, case_seed + 1)
        c0, c1 = rng.standard_normal(2)
        C = c0 * np.eye(dim) + c1 * A + A @ A
        reports.append(check_symmetrization(A, B, C))
    return reports


def expansion_suite(n_cases: int = 100, seed: int = 2026, dims=(8, 16),
                    order: int = 2) -> list["ExpansionReport"]:
    """Seeded sweep of the commutator-expansion remainder bound."""
    rng = np.random.default_rng(seed)
    cutoff = smooth_char("rising", 1.0)
    moment = profile_moment(cutoff, order)
    reports = []
    for _ in range(n_cases):
        dim = int(rng.integers(dims[0], dims[1] + 1))
        case_seed = int(rng.integers(0, 2**31 - 1))
        A = random_hermitian(dim, case_seed)
        B = random_hermitian(dim, case_seed + 1)
        reports.append(commutator_expansion(A, B, cutoff, n=order, moment=moment))
    return reports


# ---------------------------------------------------------------------------
# functions of a Hermitian matrix and the commutator expansion
# ---------------------------------------------------------------------------

def matrix_function(A: np.ndarray, fn) -> np.ndarray:
    vals, vecs = np.linalg.eigh(A)
    return (vecs * np.asarray(fn(vals))) @ vecs.conj().T


def profile_moment(profile: Profile, order: int, span_factor: float = 600.0,
                   n_samples: int = 8192) -> float:
    """int |f_hat(s)| |s|^order ds for a saturating profile, with tail allowance.

    The affine part of the profile transforms to a delta at s = 0 and drops
    out for order >= 1; the rest decays like |s|^-5 for the order-7 steps,
    so orders up to 3 converge and the tail past the window is majorized by
    fitting the |s|^-5 envelope at the window edge.
    """
    if order < 1 or order > 3:
        raise ValueError("moment order must be 1, 2, or 3")
    if not profile.deriv_support:
        return 0.0
    w_min = min(hi - lo for lo, hi in profile.deriv_support)
    S = span_factor / w_min
    s = S * (np.arange(n_samples) + 0.5) / n_samples
    hat = np.abs(profile_hat_deriv(profile, 1.0, s) / (1j * s))
    moment = 2.0 * float(np.sum(hat * s**order) * (S / n_samples))
    envelope = float(np.max(hat[-n_samples // 8:] * s[-n_samples // 8:] ** 5))
    tail = 2.0 * envelope * S ** (order - 4) / (4 - order)
    return moment + 2.0 * tail


@dataclass
class ExpansionReport:
    n: int
    remainder_norm: float
    bound: float
    moment: float
    ad_norm: float

    @property
    def slack(self) -> float:
        return self.bound - self.remainder_norm

    @property
    def holds(self) -> bool:
        return self.remainder_norm <= self.bound * (1.0 + 1e-9)


def commutator_expansion(A: np.ndarray, B: np.ndarray, cutoff: Cutoff,
                         n: int = 2, moment: float | None = None) -> ExpansionReport:
    """Check [B, f(A)] = sum_k (1/k!) f^(k)(A) ad_A^k(B) + R_n with the norm bound.

    ad_A(B) = [B, A] here, matching the expansion's orientation; n <= 3 is
    supported because the cutoff exposes three closed-form derivatives.
    A sweep over many cases with one cutoff can pass the profile moment in
    to skip its quadrature.
    """
    if n < 1 or n > 3:
        raise ValueError("expansion order n must be 1, 2, or 3")
    fA = matrix_function(A, cutoff.value)
    lhs = comm(B, fA)
    derivs = [cutoff.d1, cutoff.d2, cutoff.d3]
    ads = []
    cur = B
    for _ in range(n):
        cur = comm(cur, A)
        ads.append(cur)
    terms = np.zeros_like(lhs)
    for k in range(1, n):
        terms = terms + matrix_function(A, derivs[k - 1]) @ ads[k - 1] / factorial(k)
    ad_n = ads[n - 1]
    remainder = lhs - terms
    if moment is None:
        moment = profile_moment(cutoff, n)
    ad_norm = float(np.linalg.norm(ad_n, 2))
    bound = moment * ad_norm / factorial(n)
    return ExpansionReport(
        n=n, remainder_norm=float(np.linalg.norm(remainder, 2)),
        bound=bound, moment=moment, ad_norm=ad_norm,
    )


def check_double_commutator(f1: Profile, f2: Profile, A: np.ndarray, B: np.ndarray,
                            n_nodes: int = 16384, span_factor: float = 1000.0) -> float:
    """Relative residual of the squeezed double-commutator representation.

    [f1(A), [f2(A), B]] equals minus the double group integral against
    f_hat_2(s) f_hat_1(lambda) of simplex-ordered conjugations of ad_A^2(B).
    In the eigenbasis of A the four nested integrals collapse to divided
    differences of the windowed profile reconstructions, which is what is
    evaluated here; the residual is quadrature-limited.
    """
    vals, vecs = np.linalg.eigh(A)
    Bt = vecs.conj().T @ B @ vecs
    omega = vals[None, :] - vals[:, None]          # d_k - d_j
    ad2 = Bt * omega**2
    lhs_inner = (np.asarray(f2.value(vals))[:, None] - np.asarray(f2.value(vals))[None, :]) * Bt
    lhs = (np.asarray(f1.value(vals))[:, None] - np.asarray(f1.value(vals))[None, :]) * lhs_inner

    def divided_difference(profile: Profile):
        w_min = min(hi - lo for lo, hi in profile.deriv_support)
        S = span_factor / w_min
        ds = 2.0 * S / n_nodes
        s = -S + ds * (np.arange(n_nodes) + 0.5)
        taper = np.exp(-((s / (S / 4.3)) ** 2))
        w_hat = profile_hat_deriv(profile, 1.0, s) / (1j * s) * taper * ds
        phases = np.exp(1j * np.outer(s, vals))
        N = w_hat @ phases                          # h0 reconstructed on spectrum
        num = N[None, :] - N[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            T = num / (1j * omega)
        mid = 0.5 * (vals[None, :] + vals[:, None])
        small = np.abs(omega) < 1e-9
        # derivative fallback on (near-)diagonal entries
        dmid = (w_hat * 1j * s) @ np.exp(1j * np.outer(s, mid.ravel()))
        T = np.where(small, dmid.reshape(T.shape) / 1j, T)
        return T

    T1 = divided_difference(f1)
    T2 = divided_difference(f2)
    rhs = -ad2 * T1 * T2
    denom = max(_fro(lhs), 1e-300)
    return _fro(lhs - rhs) / denom


# ---------------------------------------------------------------------------
# Heisenberg bookkeeping on trajectories
# ---------------------------------------------------------------------------

def heisenberg_residual(traj, apply_X, nonlinearity=None) -> dict:
    """|d/dt<X> - <D_H X> - interaction| at interior snapshots.

    apply_X must be a time-independent operator callable on fields.  The
    Heisenberg term is evaluated from the implemented composition
    i[-Lap, X]; the interaction term is 2 Im (N(phi), X phi) in this
    package's pairing orientation, equivalent to the conjugate-slot form.
    """
    times = traj.times
    if len(times) < 3:
        raise ValueError("need at least 3 snapshots for a centered difference")
    from .operators import OperatorToolbox

    tb = OperatorToolbox(traj.grid, getattr(traj, "weight", None))
    expect = []
    for f in traj.fields:
        expect.append(float(np.real(inner(apply_X(f), f))))
    rows = {"t": [], "residual": [], "dexpect_dt": [], "heisenberg": [], "interaction": []}
    for i in range(1, len(times) - 1):
        f = traj.fields[i]
        dt2 = times[i + 1] - times[i - 1]
        lhs = (expect[i + 1] - expect[i - 1]) / dt2
        dh = float(np.real(inner(tb.heisenberg_free(apply_X, f), f)))
        interaction = 0.0
        if nonlinearity is not None:
            nvals = nonlinearity.values(f, times[i])
            nphi = RadialField(traj.grid, f.u * nvals)
            interaction = 2.0 * float(np.imag(inner(nphi, apply_X(f))))
        rows["t"].append(times[i])
        rows["residual"].append(abs(lhs - dh - interaction))
        rows["dexpect_dt"].append(lhs)
        rows["heisenberg"].append(dh)
        rows["interaction"].append(interaction)
    return rows
