"""Random single-qubit unitaries from the circular unitary ensemble.

Single-qubit rotations are written in the computational index basis
(``|0>``, ``|1>``) with the standard Pauli matrices of that basis::

    R_z(t) = diag(exp(-i t/2), exp(i t/2))
    R_y(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]

and every stored unitary satisfies ``u = exp(i phi) R_z(t3) R_y(t2) R_z(t1)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "LocalUnitary",
    "LocalUnitarySet",
    "substream",
    "cue_matrix",
    "cue_matrices",
    "sample_cue",
    "sample_unitary_set",
    "canonical_phase",
    "rz",
    "ry",
    "rx",
    "r_phi",
    "zyz_matrix",
    "decompose_zyz",
    "GlobalPulse",
    "AddressedLayer",
    "PulseSequence",
    "compile_pulse_sequence",
    "two_design_moment",
    "weingarten_moment",
    "TwoDesignReport",
    "check_two_design",
]

TWO_PI = 2.0 * np.pi

# stream domains keep unitary draws and shot noise independent
DOMAIN_UNITARY = 1
DOMAIN_SHOTS = 2
DOMAIN_DISORDER = 3
DOMAIN_STUDY = 4


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(master_seed, *key)``.

    Streams for different keys are statistically independent and do not
    depend on the order in which they are created.
    """
    seq = np.random.SeedSequence([int(master_seed), *(int(k) for k in key)])
    return np.random.Generator(np.random.Philox(seq))


def rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0.0], [0.0, np.exp(0.5j * theta)]])


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def r_phi(theta: float, phi: float) -> np.ndarray:
    """Rotation by ``theta`` about the equatorial axis at azimuth ``phi``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s * np.exp(-1j * phi)], [-1j * s * np.exp(1j * phi), c]])


def zyz_matrix(angles: Sequence[float]) -> np.ndarray:
    t1, t2, t3 = angles
    return rz(t3) @ ry(t2) @ rz(t1)


def canonical_phase(u: np.ndarray) -> np.ndarray:
    """Rescale ``u`` so its largest-modulus entry is real and positive."""
    flat = u.reshape(-1)
    k = int(np.argmax(np.abs(flat)))
    return u * (abs(flat[k]) / flat[k])


def _wrap(theta: float) -> float:
    t = float(np.mod(theta, TWO_PI))
    return 0.0 if TWO_PI - t < 1e-12 else t


def decompose_zyz(u: np.ndarray, atol: float = 1e-8) -> tuple[float, float, float]:
    """Angles ``(t1, t2, t3)`` with ``u = e^{i phi} R_z(t3) R_y(t2) R_z(t1)``.

    ``t2`` lies in ``[0, pi]``; ``t1`` and ``t3`` in ``[0, 2 pi)``. When
    ``t2`` is 0 or pi only the combined z angle is defined and it is put
    into ``t1`` (``t3 = 0``).
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or np.max(np.abs(u @ u.conj().T - np.eye(2))) > atol:
        raise ValueError("decompose_zyz needs a 2x2 unitary matrix")
    c, s = abs(u[0, 0]), abs(u[1, 0])
    t2 = 2.0 * np.arctan2(s, c)
    if s < 1e-12:
        t1, t3 = np.angle(u[1, 1]) - np.angle(u[0, 0]), 0.0
    elif c < 1e-12:
        t1, t3 = np.angle(u[0, 1]) - np.angle(u[1, 0]) - np.pi, 0.0
    else:
        # u00 = e^{i(phi - sig)} c, u11 = e^{i(phi + sig)} c, u10 = e^{i(phi - dlt)} s
        sig = 0.5 * (np.angle(u[1, 1]) - np.angle(u[0, 0]))
        phi = np.angle(u[0, 0]) + sig
        dlt = phi - np.angle(u[1, 0])
        t1, t3 = sig + dlt, sig - dlt
    return _wrap(t1), float(t2), _wrap(t3)


@dataclass(frozen=True, eq=False)
class LocalUnitary:
    """A single-site unitary with its ZYZ angles (qubits only)."""

    matrix: np.ndarray
    angles: tuple[float, float, float] | None = None

    @classmethod
    def from_matrix(cls, u: np.ndarray) -> "LocalUnitary":
        u = canonical_phase(np.asarray(u, dtype=complex))
        angles = decompose_zyz(u) if u.shape == (2, 2) else None
        return cls(u, angles)

    @classmethod
    def from_angles(cls, angles: Sequence[float]) -> "LocalUnitary":
        angles = tuple(float(a) for a in angles)
        return cls(canonical_phase(zyz_matrix(angles)), angles)


@dataclass(frozen=True, eq=False)
class LocalUnitarySet:
    """One product unitary ``u_1 (x) ... (x) u_N``."""

    unitary_index: int
    unitaries: tuple[LocalUnitary, ...]

    @property
    def n_qubits(self) -> int:
        return len(self.unitaries)

    @property
    def matrices(self) -> np.ndarray:
        return np.stack([u.matrix for u in self.unitaries])

    @property
    def angles(self) -> tuple[tuple[float, float, float], ...]:
        return tuple(u.angles for u in self.unitaries)


def cue_matrix(rng: np.random.Generator, d: int = 2) -> np.ndarray:
    """Haar-random ``d x d`` unitary (QR of a Ginibre matrix, phase-fixed)."""
    return cue_matrices(rng, 1, d)[0]


def cue_matrices(rng: np.random.Generator, size: int, d: int = 2) -> np.ndarray:
    """``size`` independent Haar-random unitaries, shape ``(size, d, d)``."""
    if d < 2:
        raise ValueError("dimension must be >= 2")
    z = (rng.standard_normal((size, d, d)) + 1j * rng.standard_normal((size, d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=1, axis2=2)
    return q * (diag / np.abs(diag))[:, None, :]


def sample_cue(rng: np.random.Generator, d: int = 2) -> LocalUnitary:
    """Draw one CUE(d) unitary; angles are attached for ``d == 2``."""
    return LocalUnitary.from_matrix(cue_matrix(rng, d))


def sample_unitary_set(
    master_seed: int,
    unitary_index: int,
    n_qubits: int,
    context: Sequence[int] = (0, 0),
    concatenate: bool = False,
) -> LocalUnitarySet:
    """Deterministic product unitary for ``(master_seed, context, unitary_index)``.

    Each qubit draws from its own substream, so the result does not depend
    on how many other unitaries or qubits were sampled before. With
    ``concatenate`` the unitary is the product of two independent draws,
    ``u = u_second @ u_first``, as applied in the experiment.
    """
    out = []
    for q in range(n_qubits):
        key = (DOMAIN_UNITARY, *context, unitary_index, q)
        u = cue_matrix(substream(master_seed, *key, 0))
        if concatenate:
            u = cue_matrix(substream(master_seed, *key, 1)) @ u
        out.append(LocalUnitary.from_matrix(u))
    return LocalUnitarySet(unitary_index, tuple(out))


# -- pulse compilation -------------------------------------------------------


@dataclass(frozen=True)
class GlobalPulse:
    """Resonant pulse on all qubits: ``R_phi(angle)`` with axis azimuth ``phase``."""

    angle: float
    phase: float = 0.0

    def matrix(self) -> np.ndarray:
        return r_phi(self.angle, self.phase)


@dataclass(frozen=True, eq=False)
class AddressedLayer:
    """Simultaneous addressed z rotations, one angle in ``[0, 2 pi)`` per qubit."""

    angles: np.ndarray

    def total(self) -> float:
        return float(np.sum(self.angles))


@dataclass(eq=False)
class PulseSequence:
    n_qubits: int
    pulses: list = field(default_factory=list)

    @property
    def addressed_layers(self) -> list[AddressedLayer]:
        return [p for p in self.pulses if isinstance(p, AddressedLayer)]

    def qubit_unitaries(self) -> list[np.ndarray]:
        """Time-ordered product of the pulses, one 2x2 matrix per qubit."""
        mats = [np.eye(2, dtype=complex) for _ in range(self.n_qubits)]
        for p in self.pulses:
            if isinstance(p, GlobalPulse):
                g = p.matrix()
                mats = [g @ m for m in mats]
            else:
                mats = [rz(a) @ m for a, m in zip(p.angles, mats)]
        return mats

    def unitary(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for m in self.qubit_unitaries():
            out = np.kron(out, m)
        return out


def _as_matrix(u) -> np.ndarray:
    return u.matrix if isinstance(u, LocalUnitary) else np.asarray(u, dtype=complex)


def _best_offset(angles: np.ndarray, n_alpha: int) -> float:
    alphas = np.arange(n_alpha) * (TWO_PI / n_alpha)
    cost = np.mod(angles[None, :] - alphas[:, None], TWO_PI).sum(axis=1)
    return float(alphas[int(np.argmin(cost))])


def compile_pulse_sequence(
    first: Sequence,
    second: Sequence | None = None,
    optimize_offset: bool = True,
    n_alpha: int = 720,
) -> PulseSequence:
    """Compile ``u_i = second_i @ first_i`` into global pi/2 and addressed z pulses.

    Each qubit's ``u_b u_a`` with ``u = R_z(t3) R_y(t2) R_z(t1)`` becomes::

        R_z(b3) . Rx(-pi/2) R_z(b2) Rx(pi/2) . R_z(b1 + a3) . Rx(-pi/2) R_z(a2) Rx(pi/2) . R_z(a1)

    The trailing ``R_z(b3)`` is dropped (z-basis readout). With
    ``optimize_offset`` every addressed layer is shifted by the common angle
    ``alpha`` (scanned on ``n_alpha`` grid points) that minimizes the summed
    rotation angle; the shift is absorbed into the azimuth of all later
    global pulses, leaving one more trailing z layer that is likewise dropped.
    """
    n = len(first)
    a = np.array([decompose_zyz(_as_matrix(u)) for u in first])
    b = np.zeros_like(a) if second is None else np.array([decompose_zyz(_as_matrix(u)) for u in second])
    if len(b) != n:
        raise ValueError("both unitary lists need one entry per qubit")
    layers = [a[:, 0], a[:, 1], a[:, 2] + b[:, 0], b[:, 1]]
    globals_ = [np.pi / 2, -np.pi / 2, np.pi / 2, -np.pi / 2]

    seq = PulseSequence(n)
    frame = 0.0
    for angles, g in zip(layers, globals_):
        angles = np.array([_wrap(x) for x in angles])
        if optimize_offset:
            alpha = _best_offset(angles, n_alpha)
            angles = np.array([_wrap(x - alpha) for x in angles])
            frame += alpha
        if np.any(angles > 1e-12):
            seq.pulses.append(AddressedLayer(angles))
        seq.pulses.append(GlobalPulse(g, _wrap(-frame)))
    return seq


# -- 2-design checks ---------------------------------------------------------


def two_design_moment(s, s1, s2, t, t1, t2, d: int = 2) -> float:
    """Haar value of ``E[u_{s s1} u*_{s s2} u_{t t1} u*_{t t2}]``."""
    dl = lambda x, y: 1.0 if x == y else 0.0  # noqa: E731
    first = dl(s1, s2) * dl(t1, t2) + dl(s, t) * dl(s1, t2) * dl(t1, s2)
    second = dl(s1, t2) * dl(t1, s2) + dl(s, t) * dl(s1, s2) * dl(t1, t2)
    return first / (d * d - 1) - second / (d * (d * d - 1))


def weingarten_moment(i1, j1, i2, j2, k1, l1, k2, l2, d: int = 2) -> float:
    """Haar value of ``E[u_{i1 j1} u_{i2 j2} u*_{k1 l1} u*_{k2 l2}]`` (Weingarten calculus)."""
    wg = {True: 1.0 / (d * d - 1), False: -1.0 / (d * (d * d - 1))}
    i, j, k, l_ = (i1, i2), (j1, j2), (k1, k2), (l1, l2)
    total = 0.0
    for sig in ((0, 1), (1, 0)):
        if not all(i[m] == k[sig[m]] for m in range(2)):
            continue
        for tau in ((0, 1), (1, 0)):
            if all(j[m] == l_[tau[m]] for m in range(2)):
                total += wg[sig == tau]
    return total


@dataclass
class TwoDesignReport:
    n_samples: int
    n_sigma: float
    n_patterns: int
    max_deviation: float
    max_z: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _compare(samples_prod: np.ndarray, expected: float, n_sigma: float):
    n = samples_prod.shape[0]
    mean = samples_prod.mean()
    dev = mean - expected
    z = 0.0
    ok = True
    for part, sd in ((dev.real, samples_prod.real.std(ddof=1)), (dev.imag, samples_prod.imag.std(ddof=1))):
        se = sd / np.sqrt(n)
        if abs(part) > n_sigma * se + 1e-12:
            ok = False
        if se > 0:
            z = max(z, abs(part) / se)
    return abs(dev), z, ok


def check_two_design(samples: np.ndarray, n_sigma: float = 5.0, full: bool = True) -> TwoDesignReport:
    """Compare empirical fourth-order moments of ``samples`` with Haar values.

    Every index pattern ``(s, s', s'', s~, s~', s~'')`` of the paired-row
    moment is checked; with ``full`` all ``d^8`` index assignments of
    ``E[u_ab u_cd u*_ef u*_gh]`` are checked against the Weingarten formula
    as well. A pattern fails when the sample mean is more than ``n_sigma``
    standard errors away (real and imaginary parts separately).
    """
    samples = np.asarray(samples, dtype=complex)
    n, d, _ = samples.shape
    if n < 10_000:
        raise ValueError(f"need at least 10^4 samples for a moment test, got {n}")
    report = TwoDesignReport(n, n_sigma, 0, 0.0, 0.0)
    conj = samples.conj()

    def record(key, prod, expected):
        dev, z, ok = _compare(prod, expected, n_sigma)
        report.n_patterns += 1
        report.max_deviation = max(report.max_deviation, dev)
        report.max_z = max(report.max_z, z)
        if not ok:
            report.failures.append((key, dev, z))

    for s, s1, s2, t, t1, t2 in itertools.product(range(d), repeat=6):
        prod = samples[:, s, s1] * conj[:, s, s2] * samples[:, t, t1] * conj[:, t, t2]
        record(("paired", s, s1, s2, t, t1, t2), prod, two_design_moment(s, s1, s2, t, t1, t2, d))
    if full:
        for idx in itertools.product(range(d), repeat=8):
            i1, j1, i2, j2, k1, l1, k2, l2 = idx
            prod = samples[:, i1, j1] * samples[:, i2, j2] * conj[:, k1, l1] * conj[:, k2, l2]
            record(("general", *idx), prod, weingarten_moment(*idx, d=d))
    return report
