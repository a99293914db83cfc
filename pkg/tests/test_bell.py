import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import eval_hermite

from conftest import random_density_matrix
from nanobell import bell, fock, models

R_REF = 1.12
DIMS = (12, 12)


def psi_oracle(n, x):
    norm = 1.0 / math.sqrt(2.0**n * math.factorial(n) * math.sqrt(math.pi))
    return norm * math.exp(-x * x / 2) * eval_hermite(n, x)


@pytest.fixture(scope="module")
def pair_state():
    return models.analytic_steady_state(R_REF, DIMS)


def test_hermite_functions_match_polynomials():
    xs = np.linspace(-5, 5, 11)
    table = bell.hermite_functions(15, xs)
    for n in range(16):
        np.testing.assert_allclose(table[n], [psi_oracle(n, x) for x in xs], atol=1e-13)


def test_halfline_kernel_against_adaptive_integration():
    n_max = 40
    k = bell.QuadratureKernel(n_max).halfline
    worst = 0.0
    for m in range(n_max + 1):
        for p in range(m, n_max + 1):
            val, _ = quad(lambda x: psi_oracle(m, x) * psi_oracle(p, x), 0, np.inf,
                          limit=400, epsabs=1e-14, epsrel=1e-13)
            worst = max(worst, abs(val - k[m, p]))
    assert worst < 1e-10


def test_kernel_structure():
    kern = bell.QuadratureKernel(40)
    k = kern.halfline
    np.testing.assert_array_equal(k, k.T)
    assert np.all(np.abs(np.diag(k) - 0.5) < 1e-14)
    idx = np.arange(41)
    same_parity = ((idx[:, None] - idx[None, :]) % 2 == 0) & (idx[:, None] != idx[None, :])
    assert np.all(k[same_parity] == 0)
    np.testing.assert_allclose(k + kern.minus, np.eye(41), atol=0)
    with pytest.raises(ValueError, match="too small"):
        kern.table(1, 42)
    with pytest.raises(ValueError):
        bell.QuadratureKernel(0)


def test_joint_pdf_vacuum():
    vac = fock.vacuum((4, 4))
    assert bell.joint_pdf(vac, (4, 4), 0.3, 1.1, 0.0, 0.0) == pytest.approx(1 / math.pi)
    x1, x2 = 0.7, -0.4
    assert bell.joint_pdf(vac, (4, 4), 0.0, 0.0, x1, x2) == pytest.approx(
        math.exp(-x1 * x1 - x2 * x2) / math.pi)


def test_joint_pdf_normalized_by_gauss_hermite(rng):
    dims = (6, 6)
    rho = random_density_matrix(36, rng)
    x, w = np.polynomial.hermite.hermgauss(30)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w) * np.exp(X1**2 + X2**2)
    p = bell.joint_pdf(rho, dims, 0.4, -1.3, X1, X2)
    assert np.sum(W * p) == pytest.approx(1.0, abs=1e-8)
    assert p.min() > -1e-10


def test_joint_pdf_wrong_mode_count():
    with pytest.raises(ValueError):
        bell.joint_pdf(fock.vacuum((3, 3, 3)), (3, 3, 3), 0, 0, 0, 0)


def quadrant_oracle(rho, dims, theta, phi, nodes=160, half_width=8.0):
    """Quadrant probabilities by tensor Gauss-Legendre integration of joint_pdf."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * half_width * (x + 1)
    w = 0.5 * half_width * w
    out = {}
    for a, sa in ((1, 1.0), (0, -1.0)):
        for b, sb in ((1, 1.0), (0, -1.0)):
            X1, X2 = np.meshgrid(sa * x, sb * x, indexing="ij")
            out[(a, b)] = float(np.sum(np.outer(w, w) * bell.joint_pdf(rho, dims, theta, phi, X1, X2)))
    return out[(1, 1)], out[(1, 0)], out[(0, 1)], out[(0, 0)]


def test_binning_matches_quadrant_integration(pair_state):
    got = bell.binned_probabilities(pair_state, DIMS, math.pi / 4, 0.0)
    want = quadrant_oracle(pair_state, DIMS, math.pi / 4, 0.0, nodes=90)
    np.testing.assert_allclose(got, want, atol=1e-6)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_binning_matches_quadrant_integration_random(seed):
    rng = np.random.default_rng(seed)
    dims = (4, 5)
    rho = random_density_matrix(20, rng)
    theta, phi = rng.uniform(-math.pi, math.pi, 2)
    got = bell.binned_probabilities(rho, dims, theta, phi)
    want = quadrant_oracle(rho, dims, theta, phi, nodes=80)
    np.testing.assert_allclose(got, want, atol=1e-6)


@pytest.mark.parametrize("occ", [[0, 0], [1, 1], [2, 0]])
def test_number_states_give_uniform_bins(occ):
    rho = fock.fock_dm((4, 4), occ)
    for theta, phi in ((0, 0), (0.3, 2.0)):
        np.testing.assert_allclose(bell.binned_probabilities(rho, (4, 4), theta, phi),
                                   [0.25] * 4, atol=1e-14)


@given(st.integers(0, 2**32 - 1), st.floats(-4, 4), st.floats(-4, 4))
def test_probabilities_bounded_and_normalized(seed, theta, phi):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(16, rng)
    ps = bell.binned_probabilities(rho, (4, 4), theta, phi)
    assert sum(ps) == pytest.approx(1.0, abs=1e-9)
    assert all(-1e-9 <= p <= 1 + 1e-9 for p in ps)
    m = bell.marginal_p1(rho, (4, 4), 0, theta)
    assert m == pytest.approx(ps[0] + ps[1], abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_phase_covariance(seed, delta):
    rng = np.random.default_rng(seed)
    dims = (4, 4)
    rho = random_density_matrix(16, rng)
    n1 = fock.number(dims, 0).diagonal().real
    U = np.diag(np.exp(-1j * delta * n1))
    rotated = U @ rho @ U.conj().T
    a = bell.binned_probabilities(rho, dims, 0.7 + delta, -0.2)
    b = bell.binned_probabilities(rotated, dims, 0.7, -0.2)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_parameterized_angles():
    assert bell.parameterized_angles(0.0) == bell.AngleSet(0.0, 0.0, 0.0, 0.0)
    a = bell.parameterized_angles(math.pi / 4)
    assert (a.theta, a.phi, a.theta_p, a.phi_p) == pytest.approx(
        (-math.pi / 2, 3 * math.pi / 4, 0.0, math.pi / 4))


def test_vacuum_bell_values():
    res = bell.bell_quantities(fock.vacuum((4, 4)), (4, 4), bell.parameterized_angles(0.4))
    assert res.b_chsh == pytest.approx(0.0, abs=1e-14)
    assert res.b_ch == pytest.approx(0.5, abs=1e-14)


def test_pair_state_violates_both(pair_state):
    res = bell.bell_quantities(pair_state, DIMS, bell.parameterized_angles(math.pi / 4))
    assert res.b_chsh > 2
    assert res.b_ch > 1
    # dims 12 truncates ~1e-5 of the series value; compare at larger dims
    wide = models.analytic_steady_state(R_REF, (16, 16))
    assert bell.bell_chsh(wide, (16, 16), bell.parameterized_angles(math.pi / 4)) == pytest.approx(
        bell.chsh_ideal(R_REF), abs=1e-7)


def test_ch_and_chsh_are_affinely_related_for_pair_states(pair_state):
    for v in np.linspace(0, math.pi, 13):
        res = bell.bell_quantities(pair_state, DIMS, bell.parameterized_angles(v))
        assert res.chsh_normalized == pytest.approx(2 * res.ch_normalized - 1, abs=1e-12)


def test_swapped_ch_ordering_is_available(pair_state):
    angles = bell.parameterized_angles(math.pi / 4)
    assert bell.bell_ch(pair_state, DIMS, angles, ch_ordering="swapped") == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        bell.bell_ch(pair_state, DIMS, angles, ch_ordering="other")


def test_bell_scan(pair_state):
    ch, chsh = bell.bell_scan(pair_state, DIMS, np.linspace(0, math.pi, 200))
    assert ch.shape == chsh.shape == (200,)
    assert np.argmax(chsh) in range(45, 55)


@pytest.mark.parametrize("n,m", [(1, 0), (1, 4), (3, 2), (5, 7), (2, 0), (0, 6), (7, 8)])
def test_reciprocal_gamma_pair_poles(n, m):
    # poles of Gamma(1/2 - n/2) at odd n, of Gamma(-m/2) at even m
    assert bell.reciprocal_gamma_pair(n, m) == 0.0


def test_reciprocal_gamma_pair_regular():
    want = 1 / (math.gamma(0.5) * math.gamma(-0.5))
    assert bell.reciprocal_gamma_pair(0, 1) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("r", [0.5, 0.9, 1.12, 1.4])
def test_series_matches_fock_space_chsh(r):
    d = 14
    rho = models.analytic_steady_state(r, (d, d))
    for v in (math.pi / 4, 0.3):
        fock_val = bell.bell_chsh(rho, (d, d), bell.parameterized_angles(v))
        assert bell.chsh_ideal(r, v) == pytest.approx(fock_val, abs=1e-7)


def test_series_derivative_is_consistent():
    r, h = 1.0, 1e-5
    g_plus, _ = bell.g_series(r + h)
    g_minus, _ = bell.g_series(r - h)
    _, dg = bell.g_series(r)
    assert dg == pytest.approx((g_plus - g_minus) / (2 * h), rel=1e-7)


def test_optimal_r_root():
    r = bell.optimal_r(1e-10)
    assert abs(bell.optimality_residual(r)) < 1e-6
    assert r == pytest.approx(1.12, abs=0.01)
    # frozen from this bisection and confirmed by direct maximization below
    assert r == pytest.approx(1.1153175, abs=1e-6)
    assert bell.chsh_ideal(r) == pytest.approx(2.0643786, abs=1e-6)


def test_optimal_r_agrees_with_grid_maximization():
    rs = np.arange(1.05, 1.18, 0.001)
    vals = [bell.chsh_ideal(r) for r in rs]
    assert rs[int(np.argmax(vals))] == pytest.approx(bell.optimal_r(1e-8), abs=1e-3)


def test_optimal_r_errors():
    with pytest.raises(ValueError):
        bell.optimal_r(0.0)
    with pytest.raises(ArithmeticError):
        bell.optimal_r(r_min=1.5, r_max=2.0)
