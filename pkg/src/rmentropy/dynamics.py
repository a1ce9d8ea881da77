"""Long-range XY spin chain with transverse field and on-site disorder.

``H = sum_{i<j} J_ij (s+_i s-_j + s-_i s+_j) + B sum_j sz_j + sum_j D_j sz_j``
with ``J_ij = J0 / |i - j|^alpha`` and hbar = 1, so ``J0``, ``B`` and ``D_j``
are angular rates in 1/s and times are in seconds. The Hamiltonian
conserves the number of up spins and is stored as one dense block per
excitation number ``k``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from .qstate import QuantumState

__all__ = [
    "NoiseParams",
    "QuenchConfig",
    "coupling_matrix",
    "BlockHamiltonian",
    "build_hamiltonian",
    "dense_hamiltonian",
    "evolve",
    "magnetization",
    "staggered_magnetization",
    "excitation_number_distribution",
    "excitation_decay_p",
    "excitation_number_dist",
    "draw_disorder",
]


@dataclass(frozen=True)
class NoiseParams:
    """Per-qubit depolarizing parameters and incoherent rates.

    ``lambda_prep`` acts on the initial state, ``lambda_meas`` on the
    rotated state right before readout. ``decay_rate`` and ``flip_rate``
    only feed the analytic excitation-number model.
    """

    lambda_prep: tuple[float, ...] | None = None
    lambda_meas: tuple[float, ...] | None = None
    decay_rate: float = 0.0
    flip_rate: float = 0.0

    def __post_init__(self):
        for name in ("lambda_prep", "lambda_meas"):
            val = getattr(self, name)
            if val is None:
                continue
            val = tuple(float(x) for x in val)
            if any(not 0.0 <= x <= 1.0 for x in val):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            object.__setattr__(self, name, val)
        if self.decay_rate < 0 or self.flip_rate < 0:
            raise ValueError("rates must be non-negative")


@dataclass(frozen=True)
class QuenchConfig:
    n_qubits: int
    j0: float = 420.0
    alpha: float = 1.24
    b_field: float = 0.0
    disorder: tuple[float, ...] | None = None
    times: tuple[float, ...] = (0.0,)
    noise: NoiseParams = field(default_factory=NoiseParams)
    master_seed: int = 0

    def __post_init__(self):
        if self.n_qubits < 2:
            raise ValueError("a quench needs at least 2 qubits")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        times = tuple(float(t) for t in self.times)
        if any(t < 0 for t in times) or list(times) != sorted(times):
            raise ValueError("times must be sorted and non-negative")
        object.__setattr__(self, "times", times)
        if self.disorder is not None:
            dis = tuple(float(x) for x in self.disorder)
            if len(dis) != self.n_qubits:
                raise ValueError("disorder needs one entry per site")
            object.__setattr__(self, "disorder", dis)
        for name in ("lambda_prep", "lambda_meas"):
            val = getattr(self.noise, name)
            if val is not None and len(val) != self.n_qubits:
                raise ValueError(f"noise.{name} needs one entry per qubit")

    def fields(self) -> np.ndarray:
        """Total on-site z field ``B + D_j`` per site."""
        dis = np.zeros(self.n_qubits) if self.disorder is None else np.asarray(self.disorder)
        return self.b_field + dis


def coupling_matrix(n_qubits: int, j0: float, alpha: float) -> np.ndarray:
    idx = np.arange(n_qubits)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    with np.errstate(divide="ignore"):
        j = np.where(dist > 0, j0 / np.where(dist > 0, dist, 1.0) ** alpha, 0.0)
    return j


def _bits(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    return (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1


@functools.lru_cache(maxsize=16)
def _sectors(n: int) -> tuple[np.ndarray, ...]:
    pop = _bits(n).sum(axis=1)
    return tuple(np.flatnonzero(pop == k) for k in range(n + 1))


class BlockHamiltonian:
    """Excitation-number blocks of the XY Hamiltonian.

    Eigendecompositions are computed lazily per block and reused across
    evolution times. Instances are not mutated after the first
    diagonalization and can be shared between threads.
    """

    def __init__(self, config: QuenchConfig):
        self.config = config
        n = config.n_qubits
        self.n_qubits = n
        self.couplings = coupling_matrix(n, config.j0, config.alpha)
        self.sectors = _sectors(n)
        bits = _bits(n)
        z = 2 * bits - 1
        diag = z @ config.fields()
        self.blocks = []
        for k, states in enumerate(self.sectors):
            pos = {int(s): a for a, s in enumerate(states)}
            h = np.diag(diag[states]).astype(float)
            for a, s in enumerate(states):
                sb = bits[s]
                for i in range(n):
                    for j in range(i + 1, n):
                        if sb[i] != sb[j]:
                            flipped = int(s) ^ (1 << (n - 1 - i)) ^ (1 << (n - 1 - j))
                            h[pos[flipped], a] += self.couplings[i, j]
            self.blocks.append(h)
        self._eig: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def eig(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        if k not in self._eig:
            self._eig[k] = np.linalg.eigh(self.blocks[k])
        return self._eig[k]

    def dense(self) -> np.ndarray:
        dim = 2**self.n_qubits
        h = np.zeros((dim, dim))
        for states, block in zip(self.sectors, self.blocks):
            h[np.ix_(states, states)] = block
        return h

    def block_propagator(self, k: int, t: float) -> np.ndarray:
        w, v = self.eig(k)
        return (v * np.exp(-1j * w * t)) @ v.conj().T

    def evolve(self, state: QuantumState, t: float) -> QuantumState:
        if t < 0:
            raise ValueError("evolution time must be non-negative")
        if state.n_qubits != self.n_qubits:
            raise ValueError("state and Hamiltonian sizes differ")
        if t == 0:
            return state
        props = [self.block_propagator(k, t) for k in range(self.n_qubits + 1)]
        if state.kind == "pure":
            out = np.zeros_like(state.data)
            for states, u in zip(self.sectors, props):
                out[states] = u @ state.data[states]
            return QuantumState(out, self.n_qubits)
        rho = state.data
        out = np.zeros_like(rho)
        for sa, ua in zip(self.sectors, props):
            for sb, ub in zip(self.sectors, props):
                blk = rho[np.ix_(sa, sb)]
                if np.any(blk):
                    out[np.ix_(sa, sb)] = ua @ blk @ ub.conj().T
        out = 0.5 * (out + out.conj().T)
        return QuantumState(out, self.n_qubits)

    def energy(self, state: QuantumState) -> float:
        h = self.dense()
        if state.kind == "pure":
            return float(np.vdot(state.data, h @ state.data).real)
        return float(np.trace(h @ state.data).real)


@functools.lru_cache(maxsize=64)
def build_hamiltonian(config: QuenchConfig) -> BlockHamiltonian:
    return BlockHamiltonian(config)


def dense_hamiltonian(config: QuenchConfig) -> np.ndarray:
    """Dense ``2^N x 2^N`` Hamiltonian built term by term from Pauli matrices.

    Independent of the block construction; used as its oracle.
    """
    n = config.n_qubits
    sp = np.array([[0.0, 0.0], [1.0, 0.0]])  # |1><0| raises down -> up
    sm = sp.T
    sz = np.diag([-1.0, 1.0])

    def site_op(ops: dict[int, np.ndarray]) -> np.ndarray:
        out = np.ones((1, 1))
        for q in range(n):
            out = np.kron(out, ops.get(q, np.eye(2)))
        return out

    j = coupling_matrix(n, config.j0, config.alpha)
    h = np.zeros((2**n, 2**n))
    for a in range(n):
        for b in range(a + 1, n):
            h += j[a, b] * (site_op({a: sp, b: sm}) + site_op({a: sm, b: sp}))
    for a, f in enumerate(config.fields()):
        h += f * site_op({a: sz})
    return h


def evolve(state: QuantumState, config: QuenchConfig | BlockHamiltonian, t: float) -> QuantumState:
    """``exp(-i H t)`` applied blockwise to a pure or mixed state."""
    ham = config if isinstance(config, BlockHamiltonian) else build_hamiltonian(config)
    return ham.evolve(state, t)


def magnetization(state: QuantumState) -> np.ndarray:
    """Per-site ``<sz_i>`` with up = +1."""
    n = state.n_qubits
    if state.kind == "pure":
        probs = np.abs(state.data) ** 2
    else:
        probs = np.real(np.diagonal(state.data))
    return (2 * _bits(n) - 1).T @ probs


def staggered_magnetization(state: QuantumState) -> float:
    """Overlap of the magnetization with the Neel pattern; 1 for the Neel state."""
    n = state.n_qubits
    pattern = np.array([-1.0 if i % 2 == 0 else 1.0 for i in range(n)])
    return float(pattern @ magnetization(state) / n)


def excitation_number_distribution(state: QuantumState) -> np.ndarray:
    """Probability of ``k`` up spins, ``k = 0..N``."""
    n = state.n_qubits
    probs = np.abs(state.data) ** 2 if state.kind == "pure" else np.real(np.diagonal(state.data))
    return np.array([probs[s].sum() for s in _sectors(n)])


def excitation_decay_p(t, p_initial: float, decay_rate: float, flip_rate: float):
    """Excited-state probability under decay ``decay_rate`` and flips ``flip_rate``.

    Solves ``dp/dt = -(G + g) p + g (1 - p)``:
    ``p(t) = p_eq + (p_i - p_eq) exp(-lam t)``, ``lam = 2 g + G``, ``p_eq = g / lam``.
    """
    if decay_rate < 0 or flip_rate < 0:
        raise ValueError("rates must be non-negative")
    t = np.asarray(t, dtype=float)
    lam = 2.0 * flip_rate + decay_rate
    if lam == 0:
        return np.full_like(t, p_initial) if t.ndim else float(p_initial)
    p_eq = flip_rate / lam
    out = p_eq + (p_initial - p_eq) * np.exp(-lam * t)
    return out if t.ndim else float(out)


def excitation_number_dist(t: float, n: int, n_excited: int, decay_rate: float, flip_rate: float) -> np.ndarray:
    """Distribution of the number of excited ions after time ``t``.

    ``n_excited`` ions start excited (each then excited with probability
    ``p1(t)``), the other ``n - n_excited`` start in the ground state
    (``p2(t)``); the result is the convolution of the two binomials.
    """
    if not 0 <= n_excited <= n:
        raise ValueError("need 0 <= n_excited <= n")
    p1 = excitation_decay_p(t, 1.0, decay_rate, flip_rate)
    p2 = excitation_decay_p(t, 0.0, decay_rate, flip_rate)
    n1, n2 = n_excited, n - n_excited
    out = np.zeros(n + 1)
    for k in range(n + 1):
        for k1 in range(max(0, k - n2), min(k, n1) + 1):
            k2 = k - k1
            out[k] += (
                comb(n1, k1) * p1**k1 * (1 - p1) ** (n1 - k1) * comb(n2, k2) * p2**k2 * (1 - p2) ** (n2 - k2)
            )
    return out


def draw_disorder(rng: np.random.Generator, n_qubits: int, j0: float, strength: float = 3.0) -> tuple[float, ...]:
    """On-site disorder drawn uniformly from ``[-strength J0, strength J0]``."""
    return tuple(rng.uniform(-strength * j0, strength * j0, size=n_qubits))
