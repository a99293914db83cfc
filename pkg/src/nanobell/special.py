r"""Modified Bessel functions :math:`I_0, I_1` and the reciprocal Gamma function.

The Bessel series :math:`I_\nu(x) = \sum_k (x/2)^{2k+\nu} / (k!\,(k+\nu)!)` has
only positive terms, so it is accurate to rounding for every moderate ``x``.
Beyond ``SERIES_LIMIT`` the Hankel asymptotic expansion takes over; there its
smallest term is below ``exp(-2 * SERIES_LIMIT)``, well under double precision.
"""

from __future__ import annotations

import math

import numpy as np

SERIES_LIMIT = 25.0


def _series(nu: int, x: float) -> float:
    half = 0.5 * x
    term = half**nu / math.factorial(nu)
    total = term
    k = 0
    q = half * half
    while term > 1e-17 * total:
        k += 1
        term *= q / (k * (k + nu))
        total += term
    return total


def _asymptotic_scaled(nu: int, x: float) -> float:
    """e^{-x} I_nu(x) from the large-argument expansion."""
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(total):
            break
        term = nxt
        total += term
    return total / math.sqrt(2.0 * math.pi * x)


def _bessel_i(nu: int, x: float, scaled: bool) -> float:
    if x < 0:
        # I_nu(-x) = (-1)^nu I_nu(x); scaled values use exp(-|x|)
        return (-1) ** nu * _bessel_i(nu, -x, scaled)
    if x < SERIES_LIMIT:
        v = _series(nu, x)
        return v * math.exp(-x) if scaled else v
    v = _asymptotic_scaled(nu, x)
    return v if scaled else v * math.exp(x)


def bessel_i0(x):
    """Modified Bessel function of the first kind, order 0."""
    return _vectorize(lambda v: _bessel_i(0, v, False), x)


def bessel_i1(x):
    """Modified Bessel function of the first kind, order 1."""
    return _vectorize(lambda v: _bessel_i(1, v, False), x)


def bessel_i0e(x):
    """exp(-|x|) I_0(x)."""
    return _vectorize(lambda v: _bessel_i(0, v, True), x)


def bessel_i1e(x):
    """exp(-|x|) I_1(x)."""
    return _vectorize(lambda v: _bessel_i(1, v, True), x)


def bessel_ratio_i1_i0(x):
    """I_1(x) / I_0(x), computed from scaled values so it never overflows."""
    return _vectorize(lambda v: _bessel_i(1, v, True) / _bessel_i(0, v, True), x)


def rgamma(x: float) -> float:
    """1 / Gamma(x), exactly zero at the poles x = 0, -1, -2, ..."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        return 0.0
    try:
        return 1.0 / math.gamma(x)
    except OverflowError:
        if x > 0:
            return 0.0
        # reflection: 1/Gamma(x) = Gamma(1-x) sin(pi x) / pi
        return math.exp(math.lgamma(1 - x)) * math.sin(math.pi * x) / math.pi


def _vectorize(f, x):
    if np.ndim(x) == 0:
        return f(float(x))
    arr = np.asarray(x, dtype=float)
    return np.vectorize(f, otypes=[float])(arr)
