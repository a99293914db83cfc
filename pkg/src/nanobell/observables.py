"""Phonon numbers, quadrature variances, entanglement and Wigner functions.

Variances use ``x_theta = a e^{-i theta} + a^dag e^{i theta}`` (vacuum variance 1).
Wigner functions use the phase-space variables of the Hermite functions, so the
vacuum is ``exp(-x^2 - p^2) / pi`` and ``W`` integrates to 1 over ``dx dp``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.integrate import trapezoid
from scipy.special import eval_genlaguerre

from . import fock


def mean_number(rho, dims, mode: int) -> float:
    return fock.expectation(rho, fock.number(dims, mode)).real


def quadrature_variance(rho, dims, mode: int, theta: float = 0.0) -> float:
    x = fock.quadrature(dims, mode, theta)
    m1 = fock.expectation(rho, x).real
    m2 = fock.expectation(rho, x @ x).real
    return m2 - m1 * m1


def two_mode_diff_variance(rho, dims) -> float:
    """Two-mode squeezing variance Var(x1 - x2), normalized so the vacuum gives 1.

    This is the variance of ``(x1 - x2) / sqrt(2)``; below 1 means two-mode
    squeezing.
    """
    if len(fock.as_space(dims).dims) != 2:
        raise ValueError("two_mode_diff_variance needs a two-mode state")
    x = fock.quadrature(dims, 0) - fock.quadrature(dims, 1)
    m1 = fock.expectation(rho, x).real
    return 0.5 * (fock.expectation(rho, x @ x).real - m1 * m1)


def partial_transpose(rho, dims, mode: int = 1) -> np.ndarray:
    """Partial transpose over one mode of a two-mode state."""
    d1, d2 = fock.as_space(dims).dims
    t = np.asarray(rho).reshape(d1, d2, d1, d2)
    t = t.transpose(0, 3, 2, 1) if mode == 1 else t.transpose(2, 1, 0, 3)
    return t.reshape(d1 * d2, d1 * d2)


def logarithmic_negativity(rho, dims, clamp: float = 1e-10) -> float:
    """log2 of the trace norm of the partial transpose over mode 2."""
    if len(fock.as_space(dims).dims) != 2:
        raise ValueError("logarithmic_negativity needs a two-mode state")
    pt = partial_transpose(rho, dims)
    ev = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
    en = math.log2(np.abs(ev).sum())
    if en < 0:
        if en < -clamp:
            raise ArithmeticError(f"negative log-negativity {en:.3e}")
        return 0.0
    return en


def fock_distribution(rho, dims, mode: int) -> np.ndarray:
    return np.real(np.diag(fock.partial_trace(rho, dims, [mode]))).copy()


@dataclass(frozen=True)
class WignerGrid:
    xs: np.ndarray
    ps: np.ndarray
    values: np.ndarray  # values[i, j] = W(xs[j], ps[i])

    def integral(self) -> float:
        return float(trapezoid(trapezoid(self.values, self.xs, axis=1), self.ps))


def _wigner_laguerre(rho, X, P):
    d = rho.shape[0]
    r2 = X * X + P * P
    z = math.sqrt(2.0) * (X - 1j * P)
    g = np.exp(-r2) / math.pi
    w = np.zeros_like(X, dtype=complex)
    for m in range(d):
        for n in range(m + 1):
            if rho[m, n] == 0:
                continue
            k = m - n
            coef = (-1) ** n * math.exp(0.5 * (math.lgamma(n + 1) - math.lgamma(m + 1)))
            term = coef * z**k * eval_genlaguerre(n, k, 2 * r2)
            w += (rho[m, n] * term) if k == 0 else 2 * (rho[m, n] * term).real
    return (g * w).real


def _wigner_parity(rho, X, P, pad: int = 40):
    d = rho.shape[0]
    D = d + pad
    big = np.zeros((D, D), dtype=complex)
    big[:d, :d] = rho
    a = fock.destroy(D).toarray()
    parity = (-1.0) ** np.arange(D)
    out = np.empty(X.shape)
    for idx in np.ndindex(X.shape):
        alpha = (X[idx] + 1j * P[idx]) / math.sqrt(2.0)
        disp = la.expm(-alpha * a.conj().T + np.conj(alpha) * a)  # D(-alpha)
        shifted = disp @ big @ disp.conj().T
        out[idx] = np.real(np.sum(parity * np.diag(shifted))) / math.pi
    return out


def wigner(rho_single, xs, ps, method: str = "laguerre") -> WignerGrid:
    """Wigner function of a single-mode density matrix on the grid ``xs`` x ``ps``."""
    rho_single = np.asarray(rho_single, dtype=complex)
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    X, P = np.meshgrid(xs, ps)
    if method == "laguerre":
        vals = _wigner_laguerre(rho_single, X, P)
    elif method == "parity":
        vals = _wigner_parity(rho_single, X, P)
    else:
        raise ValueError(f"unknown method {method!r}")
    return WignerGrid(xs=xs, ps=ps, values=vals)


def wigner_single_mode(rho, dims, mode: int, xs=None, ps=None,
                       method: str = "laguerre") -> WignerGrid:
    """Wigner function of the reduced state of one mode (default grid [-4, 4]^2)."""
    xs = np.linspace(-4, 4, 161) if xs is None else xs
    ps = xs if ps is None else ps
    return wigner(fock.partial_trace(rho, dims, [mode]), xs, ps, method)
