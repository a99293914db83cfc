import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density_matrix, random_hermitian
from nanobell import fock, lindblad, models
from nanobell.lindblad import CollapseTerm, build_liouvillian


def dissipator_oracle(H, collapses):
    """Apply -i[H, rho] + sum g (c rho c^dag - {c^dag c, rho}/2) term by term."""
    H = sp.csr_matrix(H, dtype=complex)
    cs = []
    for c, g in collapses:
        c = sp.csr_matrix(c, dtype=complex)
        cd = c.conj().T.tocsr()
        cs.append((c, cd, (cd @ c).tocsr(), g))

    def right(rho, op):
        # rho @ op with the sparse factor kept on the left
        return (op.T @ rho.T).T

    def apply(rho):
        out = -1j * (H @ rho - right(rho, H))
        for c, cd, cdc, g in cs:
            out += g * (c @ right(rho, cd) - 0.5 * (cdc @ rho + right(rho, cdc)))
        return out
    return apply


def basis_superoperator(apply, dim):
    """Row-major superoperator built column by column from basis matrices."""
    m = np.zeros((dim * dim, dim * dim), dtype=complex)
    for k in range(dim * dim):
        e = np.zeros(dim * dim, dtype=complex)
        e[k] = 1.0
        m[:, k] = apply(e.reshape(dim, dim)).ravel()
    return m


def toy_model(rng, dim=3, n_ops=2):
    H = random_hermitian(dim, rng)
    cs = [(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)), rng.uniform(0.1, 1))
          for _ in range(n_ops)]
    return H, cs


def test_matrix_matches_basis_oracle(rng):
    H, cs = toy_model(rng)
    L = build_liouvillian(H, [CollapseTerm(c, g) for c, g in cs])
    want = basis_superoperator(dissipator_oracle(H, cs), 3)
    assert np.max(np.abs(L.matrix.toarray() - want)) < 1e-10


def test_matrix_matches_column_stacking_formula(rng):
    # column-stacking: vec(A X B) = (B^T kron A) vec(X)
    H, cs = toy_model(rng)
    L = build_liouvillian(H, [CollapseTerm(c, g) for c, g in cs])
    eye = np.eye(3)
    sup = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for c, g in cs:
        cdc = c.conj().T @ c
        sup += g * (np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye))
    rho = random_density_matrix(3, rng)
    lhs = sup @ rho.ravel(order="F")
    rhs = L(rho).ravel(order="F")
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_matrix_free_equals_materialized(rng):
    H, cs = toy_model(rng, dim=5, n_ops=3)
    terms = [CollapseTerm(c, g) for c, g in cs]
    a = build_liouvillian(H, terms, materialize=True)
    b = build_liouvillian(H, terms, materialize=False)
    rho = random_density_matrix(5, rng)
    assert np.max(np.abs(a(rho) - b(rho))) < 1e-12


def test_amplitude_damping_generator():
    a = fock.destroy(2)
    L = build_liouvillian(sp.csr_matrix((2, 2)), [CollapseTerm(a, 0.7)])
    out = L(fock.fock_dm((2,), [1]))
    np.testing.assert_allclose(out, 0.7 * np.diag([1.0, -1.0]), atol=1e-15)


def test_trace_and_hermiticity_preserved(rng):
    H, cs = toy_model(rng, dim=4)
    L = build_liouvillian(H, [CollapseTerm(c, g) for c, g in cs])
    for _ in range(5):
        x = random_hermitian(4, rng)
        y = L(x)
        assert abs(np.trace(y)) < 1e-9
        assert np.max(np.abs(y - y.conj().T)) < 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    H, cs = toy_model(rng)
    L = build_liouvillian(H, [CollapseTerm(c, g) for c, g in cs])
    r1, r2 = random_density_matrix(3, rng), random_density_matrix(3, rng)
    lhs = L(alpha * r1 + beta * r2)
    rhs = alpha * L(r1) + beta * L(r2)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * (1 + abs(alpha) + abs(beta)) * 10


def test_construction_errors():
    with pytest.raises(ValueError, match="Hermitian"):
        build_liouvillian(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError, match="shape"):
        build_liouvillian(np.eye(2), [CollapseTerm(np.eye(3), 1.0)])
    with pytest.raises(ValueError):
        CollapseTerm(np.eye(2), -0.1)


def test_null_generator_keeps_state(rng):
    rho = random_density_matrix(4, rng)
    L = build_liouvillian(sp.csr_matrix((4, 4)))
    traj = lindblad.evolve(L, rho, [0.0, 1.0, 5.0])
    for s in traj.states:
        np.testing.assert_allclose(s, rho, atol=1e-14)


def test_amplitude_damping_decay_at_one_lifetime():
    g = 0.3
    L = build_liouvillian(sp.csr_matrix((2, 2)), [CollapseTerm(fock.destroy(2), g)])
    traj = lindblad.evolve(L, fock.fock_dm((2,), [1]), [0.0, 1.0 / g])
    assert traj.states[-1][1, 1].real == pytest.approx(math.exp(-1), abs=1e-8)


def rk4(apply, rho0, t_end, h_max):
    n = math.ceil(t_end / h_max)
    h = t_end / n
    rho = rho0.astype(complex)
    for _ in range(n):
        k1 = apply(rho)
        k2 = apply(rho + 0.5 * h * k1)
        k3 = apply(rho + 0.5 * h * k2)
        k4 = apply(rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def test_evolve_matches_fixed_step_rk4_with_step_halving():
    spec = models.ModelSpec()
    dims = spec.dims
    H, cs, _ = models.two_mode_effective_model(spec)
    L = build_liouvillian(H, cs)
    n1 = fock.number(dims, 0)
    s_points = [0.5, 1.5]
    times = np.array(s_points) * spec.time_unit
    traj = lindblad.evolve(L, fock.vacuum(dims), times)
    oracle = dissipator_oracle(H, [(c.op, c.rate) for c in cs])
    h = 0.25
    rho = fock.vacuum(dims)
    t_prev = 0.0
    for t, state in zip(times, traj.states):
        coarse = rk4(oracle, rho, t - t_prev, h)
        fine = rk4(oracle, rho, t - t_prev, h / 2)
        # the two oracle runs bracket their own error
        assert abs(fock.expectation(coarse - fine, n1)) < 1e-8
        assert abs(fock.expectation(state - fine, n1)) < 1e-6
        rho, t_prev = fine, t


def test_ideal_model_conserves_number_difference():
    spec = models.ModelSpec(N1=0.1, N2=0.3)
    dims = spec.dims
    H, cs, _ = models.two_mode_effective_model(spec)
    L = build_liouvillian(H, cs)
    diff = fock.number(dims, 1) - fock.number(dims, 0)
    traj = lindblad.evolve(L, fock.thermal_dm(dims, [0.1, 0.3]),
                           np.linspace(0, 3, 13) * spec.time_unit,
                           e_ops={"d": lambda r: fock.expectation(r, diff).real})
    d = traj.expect["d"]
    assert d[0] > 0.1
    assert np.max(np.abs(d - d[0])) < 1e-6
    assert traj.info["max_trace_drift"] < 1e-6
    assert traj.info["max_hermiticity_dev"] < 1e-8


def test_reduction_does_not_change_result():
    spec = models.ModelSpec(dims=(6, 6))
    H, cs, _ = models.two_mode_effective_model(spec)
    L = build_liouvillian(H, cs)
    t = [0.0, 20.0, 60.0]
    a = lindblad.evolve(L, fock.vacuum(spec.dims), t, reduce=True)
    b = lindblad.evolve(L, fock.vacuum(spec.dims), t, reduce=False)
    assert a.info["reduced_dim"] == 6 and b.info["reduced_dim"] == 36
    for x, y in zip(a.states, b.states):
        assert np.max(np.abs(x - y)) < 1e-8


def test_reachable_subspace_of_pair_processes():
    dims = (5, 5)
    H, cs, _ = models.two_mode_effective_model(models.ModelSpec(dims=dims))
    L = build_liouvillian(H, cs)
    idx = lindblad.reachable_subspace(L, fock.vacuum(dims))
    np.testing.assert_array_equal(idx, [fock.fock_index(dims, [m, m]) for m in range(5)])


def test_evolve_input_validation(rng):
    L = build_liouvillian(np.eye(2))
    with pytest.raises(ValueError):
        lindblad.evolve(L, fock.vacuum((2,)), [0.0, 1.0, 0.5])
    with pytest.raises(ValueError):
        lindblad.evolve(L, fock.vacuum((3,)), [0.0, 1.0])
    with pytest.raises(fock.DensityMatrixError):
        lindblad.evolve(L, 2 * fock.vacuum((2,)), [0.0, 1.0])


def test_evolve_flags_negative_states():
    L = build_liouvillian(sp.csr_matrix((2, 2)))
    bad = np.diag([1.2, -0.2]).astype(complex)
    with pytest.raises(lindblad.IntegrationError, match="positivity"):
        lindblad.evolve(L, bad, [0.0, 1.0])


def test_evolve_streams_observables_without_states():
    L = build_liouvillian(sp.csr_matrix((2, 2)), [CollapseTerm(fock.destroy(2), 1.0)])
    traj = lindblad.evolve(L, fock.fock_dm((2,), [1]), [0.0, 1.0, 2.0], store_states=False,
                           e_ops={"p1": lambda r: r[1, 1].real})
    assert traj.states is None
    np.testing.assert_allclose(traj.expect["p1"], np.exp(-np.array([0.0, 1.0, 2.0])), atol=1e-8)


@pytest.mark.parametrize("strategy", ["long-time", "null-space"])
def test_steady_state_amplitude_damping(strategy):
    L = build_liouvillian(sp.csr_matrix((3, 3)), [CollapseTerm(fock.destroy(3), 1.0)])
    rho = lindblad.steady_state(L, fock.fock_dm((3,), [2]), strategy)
    np.testing.assert_allclose(rho, fock.vacuum((3,)), atol=1e-9)


@pytest.mark.parametrize("strategy", ["long-time", "null-space"])
def test_ideal_steady_state_is_pair_coherent(strategy):
    spec = models.ModelSpec()
    H, cs, p = models.two_mode_effective_model(spec)
    L = build_liouvillian(H, cs)
    rho = lindblad.steady_state(L, fock.vacuum(spec.dims), strategy)
    assert L.residual(rho) < 1e-9
    want = models.analytic_steady_state(p.r, spec.dims)
    assert np.max(np.abs(rho - want)) < 1e-6


def test_long_time_and_null_space_agree_without_degeneracy():
    # single-phonon loss fast enough that the long-time run converges quickly
    spec = models.ModelSpec(gamma1=0.05, gamma2=0.05, dims=(8, 8))
    H, cs, _ = models.two_mode_effective_model(spec)
    L = build_liouvillian(H, cs)
    a = lindblad.steady_state(L, fock.vacuum(spec.dims), "long-time")
    b = lindblad.steady_state(L, fock.vacuum(spec.dims), "null-space")
    assert np.max(np.abs(a - b)) < 1e-6
    fock.check_density_matrix(b, herm_tol=1e-12, trace_tol=1e-10)


def test_null_space_uses_sector_weights_of_initial_state():
    # with pair processes only, each sector n2 - n1 keeps the weight it starts with
    spec = models.ModelSpec(dims=(8, 8), E=0.05)
    H, cs, _ = models.two_mode_effective_model(spec)
    L = build_liouvillian(H, cs)
    rho0 = fock.thermal_dm(spec.dims, [0.2, 0.2])
    rho = lindblad.steady_state(L, rho0, "null-space")
    diff = np.rint((fock.number(spec.dims, 1) - fock.number(spec.dims, 0)).diagonal().real)
    for k in range(-7, 8):
        mask = diff == k
        assert np.real(np.diag(rho))[mask].sum() == pytest.approx(
            np.real(np.diag(rho0))[mask].sum(), abs=1e-10)


def test_steady_state_unknown_strategy():
    L = build_liouvillian(np.eye(2))
    with pytest.raises(ValueError):
        lindblad.steady_state(L, fock.vacuum((2,)), "bogus")


def test_long_time_reports_non_convergence():
    # a closed two-level system oscillates forever
    H = np.array([[0, 1], [1, 0]], dtype=complex)
    L = build_liouvillian(H)
    with pytest.raises(lindblad.SteadyStateError):
        lindblad.steady_state(L, fock.vacuum((2,)), "long-time", max_time=200.0)
