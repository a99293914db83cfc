"""Binned-quadrature Bell tests (CH and CHSH) on two-mode Fock-space states.

Quadrature outcomes are binned by sign: X > 0 counts as 1, otherwise 0. All
probabilities here use the eigenvariable X of the Hermite functions
``psi_n(X) = (2^n n! sqrt(pi))^{-1/2} exp(-X^2/2) H_n(X)`` (vacuum density
``exp(-X^2)/sqrt(pi)``). That is ``x/sqrt(2)`` for ``x = a + a^dag``, and
because binning thresholds at zero the Bell quantities do not care.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fock import as_space, partial_trace
from .special import bessel_i0e, bessel_ratio_i1_i0, rgamma


# --- Hermite functions and half-line overlaps ---------------------------------

def hermite_functions(n_max: int, x) -> np.ndarray:
    """Normalized Hermite functions psi_0..psi_{n_max} at ``x``; shape (n_max+1, *x.shape)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = math.pi**-0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = (math.sqrt(2.0 / (n + 1)) * x * out[n]
                      - math.sqrt(n / (n + 1)) * out[n - 1])
    return out


@lru_cache(maxsize=8)
def _halfline_table(max_n: int) -> np.ndarray:
    # psi_n(0) and psi_n'(0) from the three-term and ladder recurrences
    at0 = np.zeros(max_n + 2)
    at0[0] = math.pi**-0.25
    for n in range(2, max_n + 2, 2):
        at0[n] = -math.sqrt((n - 1) / n) * at0[n - 2]
    d0 = np.zeros(max_n + 1)
    for n in range(max_n + 1):
        d0[n] = (math.sqrt(n / 2) * at0[n - 1] if n else 0.0) - math.sqrt((n + 1) / 2) * at0[n + 1]
    k = np.zeros((max_n + 1, max_n + 1))
    for m in range(max_n + 1):
        k[m, m] = 0.5
        for p in range(m + 1, max_n + 1, 2):
            # Wronskian identity: (psi_m psi_p' - psi_p psi_m')' = 2 (m - p) psi_m psi_p
            v = -(at0[m] * d0[p] - at0[p] * d0[m]) / (2 * (m - p))
            k[m, p] = k[p, m] = v
    k.setflags(write=False)
    return k


@dataclass(frozen=True)
class QuadratureKernel:
    """Half-line overlaps ``K+[m, p] = int_0^inf psi_m psi_p dX``.

    The mirror half-line is ``K- = I - K+``; the full-line overlap is the identity.
    """

    max_n: int
    halfline: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.max_n < 1:
            raise ValueError("max_n must be >= 1")
        object.__setattr__(self, "halfline", _halfline_table(int(self.max_n)))

    @property
    def minus(self) -> np.ndarray:
        return np.eye(self.max_n + 1) - self.halfline

    def table(self, outcome: int, dim: int) -> np.ndarray:
        """Overlap table for binned ``outcome`` (1: X > 0, 0: X < 0) cut to ``dim``."""
        if dim > self.max_n + 1:
            raise ValueError(f"kernel max_n={self.max_n} too small for truncation {dim}")
        k = self.halfline[:dim, :dim]
        return k if outcome == 1 else np.eye(dim) - k


def default_kernel(dims) -> QuadratureKernel:
    return QuadratureKernel(max(as_space(dims).dims) - 1)


# --- probability distributions ------------------------------------------------

def _two_mode(rho, dims):
    space = as_space(dims)
    if space.n_modes != 2:
        raise ValueError("Bell quantities need a two-mode state")
    d1, d2 = space.dims
    return np.asarray(rho).reshape(d1, d2, d1, d2), d1, d2


def joint_pdf(rho, dims, theta: float, phi: float, X1, X2) -> np.ndarray:
    """Joint density of the rotated quadratures X1 (mode 1, angle theta), X2 (mode 2, angle phi)."""
    t, d1, d2 = _two_mode(rho, dims)
    X1, X2 = np.broadcast_arrays(np.asarray(X1, float), np.asarray(X2, float))
    u = hermite_functions(d1 - 1, X1) * np.exp(-1j * theta * np.arange(d1)).reshape((-1,) + (1,) * X1.ndim)
    v = hermite_functions(d2 - 1, X2) * np.exp(-1j * phi * np.arange(d2)).reshape((-1,) + (1,) * X2.ndim)
    # sum_{mnpq} rho[m,n,p,q] u_m v_n conj(u_p v_q)
    val = np.einsum("mnpq,m...,n...,p...,q...->...", t, u, v, u.conj(), v.conj(),
                    optimize=True)
    return val.real


def _phased(k, angle):
    d = k.shape[0]
    idx = np.arange(d)
    return k * np.exp(1j * angle * (idx[None, :] - idx[:, None]))


def binned_probabilities(rho, dims, theta: float, phi: float,
                         kernel: QuadratureKernel | None = None):
    """(P11, P10, P01, P00) for sign-binned quadratures at angles (theta, phi)."""
    t, d1, d2 = _two_mode(rho, dims)
    kernel = kernel or default_kernel(dims)
    out = []
    for a, b in ((1, 1), (1, 0), (0, 1), (0, 0)):
        A = _phased(kernel.table(a, d1), theta)
        B = _phased(kernel.table(b, d2), phi)
        out.append(np.einsum("mnpq,mp,nq->", t, A, B).real)
    return tuple(float(v) for v in out)


def marginal_p1(rho, dims, mode: int, angle: float,
                kernel: QuadratureKernel | None = None) -> float:
    """Probability that mode ``mode`` reads X > 0 at quadrature angle ``angle``."""
    space = as_space(dims)
    kernel = kernel or default_kernel(dims)
    red = partial_trace(rho, space, [mode])
    A = _phased(kernel.table(1, space.dims[mode]), angle)
    return float(np.einsum("mp,mp->", red, A).real)


def correlator(rho, dims, theta, phi, kernel=None) -> float:
    p11, p10, p01, p00 = binned_probabilities(rho, dims, theta, phi, kernel)
    return p11 + p00 - p10 - p01


# --- Bell quantities -----------------------------------------------------------

@dataclass(frozen=True)
class AngleSet:
    theta: float
    phi: float
    theta_p: float
    phi_p: float


def parameterized_angles(varphi: float) -> AngleSet:
    """One-parameter family theta = -2v, phi = 3v, theta' = 0, phi' = v."""
    return AngleSet(-2 * varphi, 3 * varphi, 0.0, varphi)


@dataclass(frozen=True)
class BellResult:
    b_ch: float
    b_chsh: float
    p11: dict
    correlators: dict
    marginals: dict
    angles: AngleSet

    @property
    def ch_normalized(self) -> float:
        return self.b_ch

    @property
    def chsh_normalized(self) -> float:
        return self.b_chsh / 2


CH_ORDERINGS = ("matched", "swapped")


def bell_quantities(rho, dims, angles: AngleSet, kernel=None,
                    ch_ordering: str = "matched") -> BellResult:
    """CH and CHSH values for the four settings in ``angles``.

    CHSH is ``E(t,f) - E(t',f) + E(t,f') + E(t',f')``. With the default
    ``ch_ordering="matched"`` CH takes the same sign pattern,
    ``[P11(t,f) - P11(t',f) + P11(t,f') + P11(t',f')] / [P1(t) + P1'(f')]``,
    so that both test the same correlations. ``"swapped"`` moves the minus
    sign to (t, f') with denominator ``P1(t') + P1'(f)``; for pair states
    under ``parameterized_angles`` that variant sits at 1/2 when v = pi/4.
    """
    if ch_ordering not in CH_ORDERINGS:
        raise ValueError(f"ch_ordering must be one of {CH_ORDERINGS}")
    kernel = kernel or default_kernel(dims)
    a = angles
    pairs = {"theta,phi": (a.theta, a.phi), "theta_p,phi": (a.theta_p, a.phi),
             "theta,phi_p": (a.theta, a.phi_p), "theta_p,phi_p": (a.theta_p, a.phi_p)}
    probs = {k: binned_probabilities(rho, dims, *v, kernel) for k, v in pairs.items()}
    p11 = {k: v[0] for k, v in probs.items()}
    corr = {k: v[0] + v[3] - v[1] - v[2] for k, v in probs.items()}
    marg = {"theta": marginal_p1(rho, dims, 0, a.theta, kernel),
            "theta_p": marginal_p1(rho, dims, 0, a.theta_p, kernel),
            "phi": marginal_p1(rho, dims, 1, a.phi, kernel),
            "phi_p": marginal_p1(rho, dims, 1, a.phi_p, kernel)}
    chsh = corr["theta,phi"] - corr["theta_p,phi"] + corr["theta,phi_p"] + corr["theta_p,phi_p"]
    if ch_ordering == "matched":
        num = p11["theta,phi"] - p11["theta_p,phi"] + p11["theta,phi_p"] + p11["theta_p,phi_p"]
        den = marg["theta"] + marg["phi_p"]
    else:
        num = p11["theta,phi"] - p11["theta,phi_p"] + p11["theta_p,phi"] + p11["theta_p,phi_p"]
        den = marg["theta_p"] + marg["phi"]
    return BellResult(b_ch=num / den, b_chsh=chsh, p11=p11, correlators=corr,
                      marginals=marg, angles=angles)


def bell_ch(rho, dims, angles: AngleSet, kernel=None, ch_ordering="matched") -> float:
    return bell_quantities(rho, dims, angles, kernel, ch_ordering).b_ch


def bell_chsh(rho, dims, angles: AngleSet, kernel=None) -> float:
    return bell_quantities(rho, dims, angles, kernel).b_chsh


def bell_scan(rho, dims, varphis, kernel=None) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (B_CH, B_CHSH / 2) over a grid of the angle parameter."""
    kernel = kernel or default_kernel(dims)
    res = [bell_quantities(rho, dims, parameterized_angles(v), kernel) for v in varphis]
    return (np.array([r.ch_normalized for r in res]),
            np.array([r.chsh_normalized for r in res]))


# --- optimal r for the ideal steady state -------------------------------------

def reciprocal_gamma_pair(n: int, m: int) -> float:
    """F(n, m) = 1 / (Gamma(1/2 - n/2) Gamma(-m/2)); zero on either pole."""
    return rgamma(0.5 - n / 2) * rgamma(-m / 2)


def g_series(r: float, varphi: float = math.pi / 4, rel_tol: float = 1e-10,
             quiet_shells: int = 10, max_shell: int = 400) -> tuple[float, float]:
    """G(r) and dG/dr, summed shell by shell in s = n + m.

    ``G(r) / I0(2 r^2)`` is the ideal-state CHSH value at angle parameter
    ``varphi``. Summation stops once ``quiet_shells`` consecutive shells each
    change the partial sum by less than ``rel_tol`` relative.
    """
    if r <= 0:
        return 0.0, 0.0
    logx = math.log(2 * r * r)
    g = dg = 0.0
    quiet = 0
    for s in range(1, max_shell + 1):
        shell = 0.0
        for n in range((s + 1) // 2):
            m = s - n
            if m <= n:
                continue
            f = reciprocal_gamma_pair(n, m) - reciprocal_gamma_pair(m, n)
            if f == 0.0:
                continue
            ang = 3 * math.cos((n - m) * varphi) - math.cos(3 * varphi * (n - m))
            mag = math.exp(s * logx - 2 * (math.lgamma(n + 1) + math.lgamma(m + 1)))
            shell += 8 * math.pi * mag / (n - m) ** 2 * f * f * ang
        g += shell
        dg += shell * 2 * s / r
        if g != 0.0 and abs(shell) < rel_tol * abs(g):
            quiet += 1
            if quiet >= quiet_shells:
                return g, dg
        else:
            quiet = 0
    raise ArithmeticError(f"G(r) series did not converge by shell {max_shell} at r={r}")


def chsh_ideal(r: float, varphi: float = math.pi / 4) -> float:
    """CHSH value of the ideal steady state from the closed-form series."""
    if r == 0:
        return 0.0
    g, _ = g_series(r, varphi)
    x = 2 * r * r
    # G / I0(x) with I0 scaled to avoid overflow
    return g * math.exp(-x) / bessel_i0e(x)


def optimality_residual(r: float, varphi: float = math.pi / 4) -> float:
    """dG/dr - 4 r G I1(2r^2)/I0(2r^2): zero where G(r)/I0(2r^2) is stationary."""
    g, dg = g_series(r, varphi)
    return dg - 4 * r * g * bessel_ratio_i1_i0(2 * r * r)


def optimal_r(tolerance: float = 1e-10, varphi: float = math.pi / 4,
              r_min: float = 0.2, r_max: float = 3.0, step: float = 0.05) -> float:
    """Value of r maximizing the ideal-state CHSH violation at ``varphi``.

    Scans upward for the first sign change of ``optimality_residual`` from
    positive to negative, then bisects to ``tolerance``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    lo = r_min
    f_lo = optimality_residual(lo, varphi)
    r = lo
    while r < r_max:
        hi = min(r + step, r_max)
        f_hi = optimality_residual(hi, varphi)
        if f_lo > 0 >= f_hi:
            break
        r, lo, f_lo = hi, hi, f_hi
    else:
        raise ArithmeticError(f"no maximum bracketed in [{r_min}, {r_max}]")
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        f_mid = optimality_residual(mid, varphi)
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
