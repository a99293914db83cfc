"""Truncated Fock-space linear algebra for a handful of bosonic modes.

Operators are scipy CSR matrices, density matrices are dense numpy arrays.
Multimode spaces are ordered Kronecker products; for the device models the
order is pump (when present), signal, idler.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

# Module-level tolerances; callers may pass their own.
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_FLOOR = -1e-8
TAIL_LIMIT = 1e-6  # population allowed in the top two levels of any mode


class DensityMatrixError(ValueError):
    """Raised when an array fails the density-matrix invariants."""


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered product of truncated single-mode Fock spaces."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("a composite space needs at least one mode")
        if any(d < 2 for d in dims):
            raise ValueError(f"every mode needs dim >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def check_mode(self, mode: int) -> int:
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"mode {mode} out of range for {self.n_modes} modes")
        return mode


def as_space(dims: CompositeSpace | Sequence[int] | int) -> CompositeSpace:
    if isinstance(dims, CompositeSpace):
        return dims
    if isinstance(dims, (int, np.integer)):
        return CompositeSpace((int(dims),))
    return CompositeSpace(tuple(dims))


def destroy(dim: int) -> sp.csr_matrix:
    """Single-mode annihilation operator with <n-1|a|n> = sqrt(n)."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    return sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), 1,
                    shape=(dim, dim), format="csr", dtype=complex)


def tensor(ops: Iterable, dims=None) -> sp.csr_matrix:
    """Kronecker product of per-mode operators, first factor is mode 0.

    If ``dims`` is given, the factors must match it mode by mode.
    """
    ops = [sp.csr_matrix(op) for op in ops]
    if not ops:
        raise ValueError("tensor() needs at least one operator")
    for op in ops:
        if op.shape[0] != op.shape[1]:
            raise ValueError(f"non-square factor of shape {op.shape}")
    if dims is not None:
        want = as_space(dims).dims
        got = tuple(op.shape[0] for op in ops)
        if got != want:
            raise ValueError(f"factor dims {got} do not match space {want}")
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), ops).astype(complex)


def embed(op, dims, mode: int) -> sp.csr_matrix:
    """Place a single-mode operator on ``mode`` with identities elsewhere."""
    space = as_space(dims)
    space.check_mode(mode)
    if op.shape != (space.dims[mode],) * 2:
        raise ValueError(f"operator shape {op.shape} does not match mode dim "
                         f"{space.dims[mode]}")
    factors = [op if k == mode else sp.identity(d, format="csr")
               for k, d in enumerate(space.dims)]
    return tensor(factors)


def annihilation(dims, mode: int) -> sp.csr_matrix:
    space = as_space(dims)
    space.check_mode(mode)
    return embed(destroy(space.dims[mode]), space, mode)


def creation(dims, mode: int) -> sp.csr_matrix:
    return annihilation(dims, mode).conj().T.tocsr()


def number(dims, mode: int) -> sp.csr_matrix:
    a = annihilation(dims, mode)
    return (a.conj().T @ a).tocsr()


def quadrature(dims, mode: int, theta: float = 0.0) -> sp.csr_matrix:
    """x_theta = a e^{-i theta} + a^dag e^{i theta} (vacuum variance 1)."""
    a = annihilation(dims, mode)
    x = a * np.exp(-1j * theta)
    return (x + x.conj().T).tocsr()


def identity(dims) -> sp.csr_matrix:
    return sp.identity(as_space(dims).total_dim, format="csr", dtype=complex)


def fock_index(dims, occupations: Sequence[int]) -> int:
    space = as_space(dims)
    if len(occupations) != space.n_modes:
        raise ValueError("one occupation per mode required")
    return int(np.ravel_multi_index(tuple(occupations), space.dims))


def fock_ket(dims, occupations: Sequence[int]) -> np.ndarray:
    space = as_space(dims)
    psi = np.zeros(space.total_dim, dtype=complex)
    psi[fock_index(space, occupations)] = 1.0
    return psi


def ket2dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def fock_dm(dims, occupations: Sequence[int]) -> np.ndarray:
    return ket2dm(fock_ket(dims, occupations))


def vacuum(dims) -> np.ndarray:
    return fock_dm(dims, [0] * as_space(dims).n_modes)


def thermal_populations(dim: int, n_mean: float) -> np.ndarray:
    """Bose-Einstein Fock populations truncated to ``dim`` and renormalized."""
    if n_mean < 0:
        raise ValueError("mean occupation must be nonnegative")
    if n_mean == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    n = np.arange(dim)
    p = (n_mean / (1.0 + n_mean)) ** n / (1.0 + n_mean)
    return p / p.sum()


def thermal_dm(dims, n_means: Sequence[float]) -> np.ndarray:
    """Product of single-mode thermal states."""
    space = as_space(dims)
    if len(n_means) != space.n_modes:
        raise ValueError("one mean occupation per mode required")
    diag = reduce(np.kron, [thermal_populations(d, n)
                            for d, n in zip(space.dims, n_means)])
    return np.diag(diag).astype(complex)


def partial_trace(rho: np.ndarray, dims, keep) -> np.ndarray:
    """Reduced density matrix on the modes listed in ``keep`` (kept in order)."""
    space = as_space(dims)
    keep = sorted({int(k) for k in np.atleast_1d(keep)})
    if not keep:
        raise ValueError("keep must name at least one mode")
    for k in keep:
        space.check_mode(k)
    rho = np.asarray(rho)
    n = space.n_modes
    t = rho.reshape(space.dims + space.dims)
    # contract traced modes pairwise; indices: ket modes 0..n-1, bra modes n..2n-1
    ket = list(range(n))
    bra = [n + k if k in keep else k for k in range(n)]
    out = [k for k in keep] + [n + k for k in keep]
    reduced = np.einsum(t, ket + bra, out)
    d = int(np.prod([space.dims[k] for k in keep]))
    return reduced.reshape(d, d)


def expectation(rho: np.ndarray, op) -> complex:
    """Tr(rho op)."""
    rho = np.asarray(rho)
    if op.shape != rho.shape:
        raise ValueError(f"shape mismatch: rho {rho.shape}, op {op.shape}")
    if sp.issparse(op):
        # Tr(rho op) = sum_ij rho_ij op_ji
        coo = sp.coo_matrix(op)
        return complex(np.sum(rho[coo.col, coo.row] * coo.data))
    return complex(np.einsum("ij,ji->", rho, op))


def tail_population(rho: np.ndarray, dims, mode: int, levels: int = 2) -> float:
    """Population in the top ``levels`` Fock states of one mode."""
    p = np.real(np.diag(partial_trace(rho, dims, [mode])))
    return float(p[-levels:].sum())


def max_tail_population(rho: np.ndarray, dims, levels: int = 2) -> float:
    """Largest ``tail_population`` over all modes."""
    return max(tail_population(rho, dims, k, levels) for k in range(len(as_space(dims).dims)))


def check_density_matrix(rho: np.ndarray,
                         herm_tol: float = HERMITIAN_TOL,
                         trace_tol: float = TRACE_TOL,
                         pos_floor: float = POSITIVITY_FLOOR) -> np.ndarray:
    """Validate and return ``rho``; raises DensityMatrixError on failure."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DensityMatrixError(f"density matrix must be square, got {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    if herm > herm_tol:
        raise DensityMatrixError(f"not Hermitian: max |rho - rho^dag| = {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise DensityMatrixError(f"trace {tr.real:.12g} deviates from 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lo < pos_floor:
        raise DensityMatrixError(f"negative eigenvalue {lo:.3e}")
    return rho
