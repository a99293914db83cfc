"""Liouvillian construction, time evolution and steady states.

Vectorization is row-major (numpy C order), so that
``vec(A X B) = kron(A, B.T) @ vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import connected_components

from .fock import POSITIVITY_FLOOR, DensityMatrixError

MATERIALIZE_MAX_DIM = 256
RTOL = 1e-8
ATOL = 1e-12  # 1e-10 lets eigenvalues of near-zero populations drift below the -1e-8 floor
STEADY_TOL = 1e-9
RENORM_LIMIT = 1e-6


class LindbladError(RuntimeError):
    """Base class for failures inside the master-equation engine."""


class IntegrationError(LindbladError):
    pass


class SteadyStateError(LindbladError):
    pass


@dataclass(frozen=True)
class CollapseTerm:
    op: sp.csr_matrix
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"collapse rate must be nonnegative, got {self.rate}")
        object.__setattr__(self, "op", sp.csr_matrix(self.op, dtype=complex))


class Liouvillian:
    """Lindblad generator ``L(rho) = -i[H, rho] + sum_k rate_k D[c_k] rho``.

    Small spaces (``dim <= MATERIALIZE_MAX_DIM``) are applied through a sparse
    superoperator; larger ones matrix-free. ``matrix`` can still be requested
    explicitly for any size.
    """

    def __init__(self, H, collapses: Sequence[CollapseTerm] = (),
                 materialize: bool | None = None, herm_tol: float = 1e-10):
        H = sp.csr_matrix(H, dtype=complex)
        if H.shape[0] != H.shape[1]:
            raise ValueError(f"Hamiltonian must be square, got {H.shape}")
        dim = H.shape[0]
        if dim and abs(H - H.conj().T).max() > herm_tol:
            raise ValueError("Hamiltonian is not Hermitian")
        collapses = [c if isinstance(c, CollapseTerm) else CollapseTerm(*c)
                     for c in collapses]
        for c in collapses:
            if c.op.shape != H.shape:
                raise ValueError(f"collapse operator shape {c.op.shape} does not "
                                 f"match Hamiltonian shape {H.shape}")
        self.H = H
        self.collapses = tuple(collapses)
        self.dim = dim
        self._jumps = [np.sqrt(c.rate) * c.op for c in self.collapses if c.rate > 0]
        heff = H.astype(complex)
        for j in self._jumps:
            heff = heff - 0.5j * (j.conj().T @ j)
        self._heff = heff.tocsr()
        self._heff_dag = self._heff.conj().T.tocsr()
        self._jumps_dag = [j.conj().T.tocsr() for j in self._jumps]
        self.materialized = dim <= MATERIALIZE_MAX_DIM if materialize is None else materialize
        self._matrix = None

    @property
    def matrix(self) -> sp.csr_matrix:
        """Sparse superoperator acting on row-major ``vec(rho)``."""
        if self._matrix is None:
            eye = sp.identity(self.dim, format="csr", dtype=complex)
            m = -1j * sp.kron(self._heff, eye) + 1j * sp.kron(eye, self._heff.conj())
            for j in self._jumps:
                m = m + sp.kron(j, j.conj())
            self._matrix = m.tocsr()
        return self._matrix

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"state shape {rho.shape} does not match dim {self.dim}")
        if self.materialized:
            return (self.matrix @ rho.ravel()).reshape(self.dim, self.dim)
        return self._apply_free(rho)

    __call__ = apply

    def _apply_free(self, rho):
        # rho Heff^dag and rho J^dag via transposes so the sparse factor stays on the left
        out = -1j * (self._heff @ rho) + 1j * (self._heff_dag.T @ rho.T).T
        for j, jd in zip(self._jumps, self._jumps_dag):
            out += j @ (jd.T @ rho.T).T
        return out

    def rhs(self) -> Callable[[float, np.ndarray], np.ndarray]:
        """Right-hand side ``f(t, vec rho)`` for ODE integrators."""
        if self.materialized:
            m = self.matrix
            return lambda t, y: m @ y
        d = self.dim
        return lambda t, y: self._apply_free(y.reshape(d, d)).ravel()

    def residual(self, rho: np.ndarray) -> float:
        """max |L(rho)|, the stationarity measure."""
        return float(np.max(np.abs(self.apply(rho))))

    def restrict(self, indices: np.ndarray) -> "Liouvillian":
        """Generator on the span of the given basis states.

        Exact only when that span is invariant (see ``reachable_subspace``).
        """
        idx = np.asarray(indices)
        sub = lambda m: m[idx][:, idx]
        return Liouvillian(sub(self.H), [CollapseTerm(sub(c.op), c.rate)
                                         for c in self.collapses if c.rate > 0])


def build_liouvillian(H, collapses: Sequence[CollapseTerm] = (),
                      materialize: bool | None = None) -> Liouvillian:
    return Liouvillian(H, collapses, materialize=materialize)


def reachable_subspace(L: Liouvillian, rho0: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Basis states that the dynamics can populate, starting from ``rho0``.

    This is the closure of the support of ``rho0`` under the nonzero patterns of
    the Hamiltonian and of every jump operator. Density matrices supported on
    that set stay there, so restricting to it loses nothing.
    """
    rho0 = np.asarray(rho0)
    support = np.flatnonzero((np.abs(rho0) > tol).any(axis=0) | (np.abs(rho0) > tol).any(axis=1))
    graph = abs(L._heff)
    for j in L._jumps:
        graph = graph + abs(j)
    seen = np.zeros(L.dim, dtype=bool)
    seen[support] = True
    frontier = support
    adj = graph.T.tocsr()  # row i lists states that <j|op|i> reaches
    while frontier.size:
        nxt = np.unique(adj[frontier].indices)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return np.flatnonzero(seen)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: list | None
    expect: dict[str, np.ndarray] = field(default_factory=dict)
    model: object = None
    info: dict = field(default_factory=dict)


def _embed(rho_sub, idx, dim):
    if idx is None:
        return rho_sub
    full = np.zeros((dim, dim), dtype=complex)
    full[np.ix_(idx, idx)] = rho_sub
    return full


def _checked_state(rho, t, pos_floor, check_positivity):
    tr = np.trace(rho).real
    drift = abs(tr - 1.0)
    if drift > RENORM_LIMIT:
        raise IntegrationError(f"trace drift {drift:.3e} at t={t:g} exceeds {RENORM_LIMIT}")
    if drift > 0:
        rho = rho / tr
    if check_positivity:
        lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if lo < pos_floor:
            raise IntegrationError(f"positivity violated at t={t:g}: eigenvalue {lo:.3e}")
    return rho


def evolve(L: Liouvillian, rho0: np.ndarray, times: Sequence[float], *,
           rtol: float = RTOL, atol: float = ATOL,
           e_ops: Mapping[str, Callable[[np.ndarray], complex]] | None = None,
           store_states: bool = True, reduce: bool = True,
           check_positivity: bool = True, pos_floor: float = POSITIVITY_FLOOR,
           model=None) -> TrajectoryRecord:
    """Integrate the master equation from ``rho0`` (taken at t=0).

    Uses an adaptive Dormand-Prince 5(4) scheme with local error control.
    ``e_ops`` maps names to functions of the state and lets long runs stream
    observables instead of storing every state. With ``reduce`` the problem is
    first restricted to ``reachable_subspace``; outputs are always full size.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1D grid")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing and start at t >= 0")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (L.dim, L.dim):
        raise ValueError(f"rho0 shape {rho0.shape} does not match dim {L.dim}")
    if abs(np.trace(rho0) - 1) > RENORM_LIMIT:
        raise DensityMatrixError("rho0 is not trace-normalized")

    idx = None
    work = L
    if reduce:
        sub = reachable_subspace(L, rho0)
        if sub.size < L.dim:
            idx = sub
            work = L.restrict(sub)
    y0 = (rho0 if idx is None else rho0[np.ix_(idx, idx)]).ravel()
    d = work.dim

    if times[-1] > 0:
        sol = solve_ivp(work.rhs(), (0.0, times[-1]), y0, method="RK45",
                        t_eval=times, rtol=rtol, atol=atol)
        if sol.status != 0:
            raise IntegrationError(f"integration failed: {sol.message}")
        ys = sol.y
        nfev = sol.nfev
    else:
        ys = y0[:, None]
        nfev = 0

    e_ops = dict(e_ops or {})
    expect = {k: [] for k in e_ops}
    states = [] if store_states else None
    herm_dev = 0.0
    trace_dev = 0.0
    for i, t in enumerate(times):
        rho_sub = ys[:, i].reshape(d, d)
        trace_dev = max(trace_dev, abs(np.trace(rho_sub) - 1))
        herm_dev = max(herm_dev, float(np.max(np.abs(rho_sub - rho_sub.conj().T))))
        rho_sub = _checked_state(rho_sub, t, pos_floor, check_positivity)
        rho = _embed(rho_sub, idx, L.dim)
        if states is not None:
            states.append(rho)
        for k, f in e_ops.items():
            expect[k].append(f(rho))
    expect = {k: np.asarray(v) for k, v in expect.items()}
    info = {"nfev": nfev, "max_trace_drift": float(trace_dev),
            "max_hermiticity_dev": herm_dev, "rtol": rtol, "atol": atol,
            "reduced_dim": d}
    return TrajectoryRecord(times=times, states=states, expect=expect,
                            model=model, info=info)


def _steady_long_time(L, rho0, tol, max_time, first_chunk, rtol, atol):
    idx = reachable_subspace(L, rho0)
    work = L if idx.size == L.dim else L.restrict(idx)
    y = (rho0 if idx.size == L.dim else rho0[np.ix_(idx, idx)]).ravel().astype(complex)
    f = work.rhs()
    t = 0.0
    chunk = first_chunk
    while True:
        res = float(np.max(np.abs(f(t, y))))
        if res < tol:
            rho = _embed(y.reshape(work.dim, work.dim), None if idx.size == L.dim else idx, L.dim)
            rho = 0.5 * (rho + rho.conj().T)
            return rho / np.trace(rho).real, t, res
        if t >= max_time:
            raise SteadyStateError(f"no convergence by t={t:g}: max|L(rho)| = {res:.3e}")
        span = min(chunk, max_time - t)
        sol = solve_ivp(f, (t, t + span), y, method="RK45", t_eval=[t + span],
                        rtol=rtol, atol=atol)
        if sol.status != 0:
            raise IntegrationError(f"integration failed: {sol.message}")
        y = sol.y[:, -1]
        t += span
        chunk *= 2


def _solve_component(M, nodes, diag_nodes, weight):
    """Stationary vector of the closed block ``M[nodes][:, nodes]``."""
    block = M[nodes][:, nodes].tolil()
    rhs = np.zeros(len(nodes), dtype=complex)
    pos = {n: k for k, n in enumerate(nodes)}
    if diag_nodes.size:
        # one diagonal row is redundant (trace preservation); swap in Tr = weight
        r = pos[diag_nodes[0]]
        block[r, :] = 0
        for n in diag_nodes:
            block[r, pos[n]] = 1.0
        rhs[r] = weight
    try:
        x = spla.splu(block.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SteadyStateError("degenerate steady-state kernel with no applicable "
                               "selection rule") from exc
    if not np.all(np.isfinite(x)):
        raise SteadyStateError("steady-state solve produced non-finite values")
    return x


def _steady_null_space(L, rho0, tol):
    M = L.matrix
    dim = L.dim
    pattern = (abs(M) > 0).astype(np.int8)
    ncomp, labels = connected_components(pattern, directed=True, connection="weak")
    vec0 = rho0.ravel()
    touched = np.unique(labels[np.flatnonzero(np.abs(vec0) > 0)])
    diag_all = np.arange(dim) * (dim + 1)
    out = np.zeros(dim * dim, dtype=complex)
    for c in touched:
        nodes = np.flatnonzero(labels == c)
        diag_nodes = np.intersect1d(nodes, diag_all)
        weight = vec0[diag_nodes].sum() if diag_nodes.size else 0.0
        out[nodes] = _solve_component(M, nodes, diag_nodes, weight)
    rho = out.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    return rho, len(touched)


def steady_state(L: Liouvillian, rho0: np.ndarray | None = None,
                 strategy: str = "long-time", *, tol: float = STEADY_TOL,
                 max_time: float = 1e6, first_chunk: float = 50.0,
                 rtol: float = RTOL, atol: float = ATOL) -> np.ndarray:
    """Stationary state reached from ``rho0`` (vacuum-like |0><0| by default).

    ``long-time`` integrates until ``max|L(rho)| < tol``. ``null-space`` solves
    ``L(rho) = 0`` directly; when the kernel is degenerate because of conserved
    quantities, the superoperator splits into closed blocks and each block
    touched by ``rho0`` is solved with the trace that ``rho0`` carries there.
    """
    if rho0 is None:
        rho0 = np.zeros((L.dim, L.dim), dtype=complex)
        rho0[0, 0] = 1.0
    rho0 = np.asarray(rho0, dtype=complex)
    if strategy == "long-time":
        rho, _, _ = _steady_long_time(L, rho0, tol, max_time, first_chunk, rtol, atol)
    elif strategy == "null-space":
        rho, _ = _steady_null_space(L, rho0, tol)
        res = L.residual(rho)
        if res > tol:
            raise SteadyStateError(f"null-space solution residual {res:.3e} > {tol:g}")
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return rho
