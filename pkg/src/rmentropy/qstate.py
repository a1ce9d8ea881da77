"""Dense qubit states, exact reductions and purity oracles.

Basis convention used throughout the package: for ``N`` qubits the
computational basis index carries qubit 1 in its most-significant bit.
Bit value ``1`` is the excited state ``|up>`` and ``0`` is ``|down>``, so
``sigma_z`` has eigenvalue ``+1`` on bit ``1`` and ``-1`` on bit ``0``.
Sites are always addressed 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "QuantumState",
    "normalize_sites",
    "neel_state",
    "product_state",
    "ghz_state",
    "bell_state",
    "random_pure_state",
    "random_mixed_state",
    "partial_trace",
    "exact_purity",
    "exact_renyi2",
    "apply_depolarizing",
    "depolarize_all",
    "apply_local_unitaries",
    "MAX_PURE_QUBITS",
    "MAX_MIXED_QUBITS",
]

MAX_PURE_QUBITS = 14
MAX_MIXED_QUBITS = 10
_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A pure state vector or a density matrix over ``n_qubits`` qubits.

    Instances are immutable by convention; every operation in this package
    returns a new state.
    """

    data: np.ndarray
    n_qubits: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        object.__setattr__(self, "data", data)
        n = self.n_qubits
        if n < 1:
            raise ValueError("n_qubits must be >= 1")
        dim = 2**n
        if data.ndim == 1:
            if n > MAX_PURE_QUBITS:
                raise ValueError(f"pure states limited to {MAX_PURE_QUBITS} qubits")
            if data.shape != (dim,):
                raise ValueError(f"expected vector of length {dim}, got {data.shape}")
            norm = np.vdot(data, data).real
            if abs(norm - 1.0) > _TOL:
                raise ValueError(f"state vector not normalized (norm^2={norm})")
        elif data.ndim == 2:
            if n > MAX_MIXED_QUBITS:
                raise ValueError(f"mixed states limited to {MAX_MIXED_QUBITS} qubits")
            if data.shape != (dim, dim):
                raise ValueError(f"expected {dim}x{dim} matrix, got {data.shape}")
            if np.max(np.abs(data - data.conj().T)) > _TOL:
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(data)
            if abs(tr - 1.0) > _TOL:
                raise ValueError(f"density matrix trace is {tr}, expected 1")
        else:
            raise ValueError("state data must be a vector or a square matrix")

    @classmethod
    def pure(cls, vector) -> "QuantumState":
        vector = np.asarray(vector, dtype=complex)
        n = int(round(np.log2(vector.size)))
        return cls(vector, n)

    @classmethod
    def mixed(cls, rho) -> "QuantumState":
        rho = np.asarray(rho, dtype=complex)
        n = int(round(np.log2(rho.shape[0])))
        return cls(rho, n)

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def density_matrix(self) -> np.ndarray:
        if self.kind == "pure":
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_mixed(self) -> "QuantumState":
        if self.kind == "mixed":
            return self
        return QuantumState(self.density_matrix(), self.n_qubits)

    def min_eigenvalue(self) -> float:
        if self.kind == "pure":
            return 0.0
        return float(np.linalg.eigvalsh(self.data).min())


def normalize_sites(sites: Iterable[int], n_qubits: int) -> tuple[int, ...]:
    """Return ``sites`` as a sorted tuple of distinct 1-based indices.

    Raises ``ValueError`` for an empty selection, duplicates, or sites
    outside ``1..n_qubits``.
    """
    out = tuple(sorted(int(s) for s in sites))
    if not out:
        raise ValueError("subsystem must contain at least one site")
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate sites in {out}")
    if out[0] < 1 or out[-1] > n_qubits:
        raise ValueError(f"sites {out} not within 1..{n_qubits}")
    return out


def _basis_vector(bits: Sequence[int]) -> np.ndarray:
    n = len(bits)
    idx = 0
    for b in bits:
        idx = (idx << 1) | (1 if b else 0)
    vec = np.zeros(2**n, dtype=complex)
    vec[idx] = 1.0
    return vec


def product_state(bits: Sequence[int]) -> QuantumState:
    """Computational basis state; ``bits[0]`` is qubit 1 (1 = up)."""
    return QuantumState(_basis_vector(bits), len(bits))


def neel_state(n_qubits: int) -> QuantumState:
    """Neel state ``|down up down ...>`` with site 1 down."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    return product_state([i % 2 for i in range(n_qubits)])


def ghz_state(n_qubits: int) -> QuantumState:
    vec = np.zeros(2**n_qubits, dtype=complex)
    vec[0] = vec[-1] = 1 / np.sqrt(2)
    return QuantumState(vec, n_qubits)


def bell_state() -> QuantumState:
    return ghz_state(2)


def random_pure_state(n_qubits: int, rng: np.random.Generator) -> QuantumState:
    """Haar-random pure state (normalized complex Gaussian vector)."""
    dim = 2**n_qubits
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return QuantumState(vec / np.linalg.norm(vec), n_qubits)


def random_mixed_state(n_qubits: int, rng: np.random.Generator, rank: int | None = None) -> QuantumState:
    """Random density matrix ``G G^dag / Tr`` with Gaussian ``G`` of given rank."""
    dim = 2**n_qubits
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(rho / np.trace(rho).real, n_qubits)


def partial_trace(state: QuantumState, keep: Iterable[int]) -> QuantumState:
    """Reduced density matrix on the sites in ``keep`` (1-based)."""
    n = state.n_qubits
    keep = normalize_sites(keep, n)
    k_axes = [s - 1 for s in keep]
    rest = [a for a in range(n) if a not in k_axes]
    dim_k = 2 ** len(keep)
    if state.kind == "pure":
        psi = state.data.reshape((2,) * n).transpose(k_axes + rest).reshape(dim_k, -1)
        rho = psi @ psi.conj().T
    else:
        t = state.data.reshape((2,) * (2 * n))
        row = list(range(n))
        col = list(range(n, 2 * n))
        for a in rest:
            col[a] = row[a]
        out = [row[a] for a in k_axes] + [col[a] for a in k_axes]
        rho = np.einsum(t, row + col, out).reshape(dim_k, dim_k)
    rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(rho, len(keep))


def exact_purity(state: QuantumState) -> float:
    """``Tr(rho^2)``; exactly 1 for pure states."""
    if state.kind == "pure":
        return 1.0
    return float(np.sum(np.abs(state.data) ** 2))


def exact_renyi2(state: QuantumState, sites: Iterable[int] | None = None) -> float:
    """Second-order Renyi entropy in bits, optionally of a reduced state."""
    if sites is not None:
        state = partial_trace(state, sites)
    return float(-np.log2(exact_purity(state)))


def apply_depolarizing(state: QuantumState, site: int, lam: float) -> QuantumState:
    """Depolarize one site: ``rho -> lam rho + (1 - lam) Tr_site(rho) (x) I/2``.

    Pure states are promoted to density matrices first.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"depolarizing parameter must lie in [0, 1], got {lam}")
    n = state.n_qubits
    (site,) = normalize_sites([site], n)
    rho = state.to_mixed().data
    if lam == 1.0:
        return QuantumState(rho, n)
    a = site - 1
    t = rho.reshape((2,) * (2 * n))
    reduced = np.trace(t, axis1=a, axis2=n + a)
    # put identity/2 back on (row a, col a)
    mixed = np.multiply.outer(reduced, np.eye(2) / 2)
    mixed = np.moveaxis(mixed, [2 * n - 2, 2 * n - 1], [a, n + a])
    out = lam * t + (1.0 - lam) * mixed
    return QuantumState(out.reshape(rho.shape), n)


def depolarize_all(state: QuantumState, lambdas: Sequence[float]) -> QuantumState:
    """Apply ``apply_depolarizing`` on every site in order."""
    if len(lambdas) != state.n_qubits:
        raise ValueError("need one depolarizing parameter per qubit")
    for site, lam in enumerate(lambdas, start=1):
        state = apply_depolarizing(state, site, lam)
    return state


def apply_local_unitaries(state: QuantumState, unitaries: Sequence[np.ndarray]) -> QuantumState:
    """Apply ``u_1 (x) ... (x) u_N`` to the state."""
    n = state.n_qubits
    if len(unitaries) != n:
        raise ValueError("need one single-qubit unitary per qubit")
    if state.kind == "pure":
        psi = state.data.reshape((2,) * n)
        for a, u in enumerate(unitaries):
            psi = np.moveaxis(np.tensordot(u, psi, axes=([1], [a])), 0, a)
        return QuantumState(psi.reshape(-1), n)
    t = state.data.reshape((2,) * (2 * n))
    for a, u in enumerate(unitaries):
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [a])), 0, a)
        t = np.moveaxis(np.tensordot(u.conj(), t, axes=([1], [n + a])), 0, n + a)
    return QuantumState(t.reshape(state.data.shape), n)
