"""Simulated randomized-measurement experiments.

A run prepares the Neel state (optionally depolarized), evolves it,
applies product CUE unitaries, depolarizes each qubit before readout and
samples z-basis bitstrings.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from . import __version__
from .dynamics import QuenchConfig, build_hamiltonian, evolve
from .qstate import QuantumState, depolarize_all, neel_state, normalize_sites
from .randunitary import DOMAIN_SHOTS, LocalUnitarySet, sample_unitary_set, substream
from .records import MeasurementRecord

__all__ = [
    "NoiseModel",
    "calibrate_prep_lambda",
    "outcome_probabilities",
    "depolarize_probabilities",
    "sample_counts",
    "sample_record",
    "prepare_state",
    "ProtocolRun",
    "run_protocol",
    "config_hash",
]


@dataclass(frozen=True)
class NoiseModel:
    """Per-qubit depolarizing parameters at preparation and at readout."""

    prep: tuple[float, ...]
    meas: tuple[float, ...]

    def __post_init__(self):
        prep = tuple(float(x) for x in self.prep)
        meas = tuple(float(x) for x in self.meas)
        if len(prep) != len(meas):
            raise ValueError("prep and meas need the same number of qubits")
        if any(not 0.0 <= x <= 1.0 for x in prep + meas):
            raise ValueError("depolarizing parameters must lie in [0, 1]")
        object.__setattr__(self, "prep", prep)
        object.__setattr__(self, "meas", meas)

    @classmethod
    def uniform(cls, n_qubits: int, prep: float = 1.0, meas: float = 1.0) -> "NoiseModel":
        return cls((prep,) * n_qubits, (meas,) * n_qubits)

    @classmethod
    def noiseless(cls, n_qubits: int) -> "NoiseModel":
        return cls.uniform(n_qubits)

    @classmethod
    def from_config(cls, config: QuenchConfig) -> "NoiseModel":
        n = config.n_qubits
        prep = config.noise.lambda_prep or (1.0,) * n
        meas = config.noise.lambda_meas or (1.0,) * n
        return cls(prep, meas)


def calibrate_prep_lambda(n_qubits: int, target_purity: float) -> float:
    """Per-qubit depolarizing parameter giving a product pure state ``target_purity``.

    A depolarized pure qubit has purity ``(1 + lam^2) / 2``; the global
    purity of the product is solved for ``lam`` by bisection.
    """
    if not 2.0**-n_qubits < target_purity <= 1.0:
        raise ValueError("target purity must lie in (2^-N, 1]")
    if target_purity == 1.0:
        return 1.0
    f = lambda lam: ((1 + lam * lam) / 2) ** n_qubits - target_purity  # noqa: E731
    return bisect(f, 0.0, 1.0, xtol=1e-15)


def _rotated_diagonal(rho: np.ndarray, mats: np.ndarray) -> np.ndarray:
    """``diag(U rho U^dag)`` for ``U = (x)_i mats[i]``, reshaped to ``(2,)*N``.

    Qubits are rotated one at a time and their row/column pair is collapsed
    to the diagonal right away, so the tensor halves after each step.
    """
    n = len(mats)
    t = np.ascontiguousarray(rho)
    # layout: (row_i, other rows, col_i, other cols + finished diagonal axes)
    for i, u in enumerate(mats):
        left = n - i
        x = 2 ** (left - 1)
        t = t.reshape(2, x, 2, -1)
        t = np.tensordot(u, t, axes=([1], [0]))  # (s, x, b, y)
        uc = u.conj()
        t = t[:, :, 0, :] * uc[:, 0, None, None] + t[:, :, 1, :] * uc[:, 1, None, None]
        # move the new diagonal axis s behind the others: (x, y, s)
        t = np.moveaxis(t, 0, -1)
    return t.real.reshape((2,) * n)


def depolarize_probabilities(probs: np.ndarray, lambdas: Sequence[float]) -> np.ndarray:
    """Readout depolarization on an outcome distribution shaped ``(2,)*N``.

    Per qubit ``p -> lam p + (1 - lam) marginal (x) uniform``, which is the
    diagonal of the depolarizing channel applied to the rotated state.
    """
    out = probs
    for a, lam in enumerate(lambdas):
        if lam != 1.0:
            out = lam * out + (1.0 - lam) * 0.5 * out.sum(axis=a, keepdims=True)
    return out


def outcome_probabilities(
    state: QuantumState,
    unitaries: LocalUnitarySet | np.ndarray | Sequence[np.ndarray],
    subsystem: Sequence[int] | None = None,
    meas_lambdas: Sequence[float] | None = None,
) -> np.ndarray:
    """z-basis outcome probabilities after the product unitary.

    Returns a flat vector over ``2^N`` outcomes, or over ``2^{N_A}``
    outcomes of ``subsystem`` (marginalized; qubit order as in the mask).
    """
    mats = unitaries.matrices if isinstance(unitaries, LocalUnitarySet) else np.asarray(unitaries)
    n = state.n_qubits
    if len(mats) != n:
        raise ValueError(f"need {n} single-qubit unitaries, got {len(mats)}")
    if state.kind == "pure":
        psi = state.data.reshape((2,) * n)
        for a, u in enumerate(mats):
            psi = np.moveaxis(np.tensordot(u, psi, axes=([1], [a])), 0, a)
        probs = np.abs(psi) ** 2
    else:
        probs = _rotated_diagonal(state.data, mats)
    probs = np.clip(probs, 0.0, None)
    if meas_lambdas is not None:
        probs = depolarize_probabilities(probs, meas_lambdas)
    if subsystem is not None:
        keep = [s - 1 for s in normalize_sites(subsystem, n)]
        probs = probs.sum(axis=tuple(a for a in range(n) if a not in keep))
    probs = probs.reshape(-1)
    return probs / probs.sum()


def sample_counts(rng: np.random.Generator, n_shots: int, probs: np.ndarray) -> np.ndarray:
    """Multinomial counts (numpy draws them by sequential binomial conditioning)."""
    p = np.clip(probs, 0.0, None)
    return rng.multinomial(n_shots, p / p.sum())


def _counts_to_map(counts: np.ndarray, n_qubits: int) -> dict[str, int]:
    return {format(int(i), f"0{n_qubits}b"): int(counts[i]) for i in np.flatnonzero(counts)}


def sample_record(
    state: QuantumState,
    unitary_index: int,
    n_shots: int,
    noise: NoiseModel | None,
    seed: int,
    *,
    time: float = 0.0,
    pattern: int = 0,
    context: Sequence[int] | None = None,
    concatenate: bool = False,
) -> MeasurementRecord:
    """Measure ``state`` once per shot after the random unitary ``unitary_index``.

    The unitary and the shot noise come from separate substreams of
    ``seed`` keyed by ``context`` (defaults to ``(pattern, 0)``) and
    ``unitary_index``, so the same arguments always give the same record.
    """
    if n_shots < 2:
        raise ValueError("at least two shots per unitary are needed")
    context = (pattern, 0) if context is None else tuple(context)
    uset = sample_unitary_set(seed, unitary_index, state.n_qubits, context, concatenate)
    meas = None if noise is None else noise.meas
    probs = outcome_probabilities(state, uset, meas_lambdas=meas)
    rng = substream(seed, DOMAIN_SHOTS, *context, unitary_index)
    counts = sample_counts(rng, n_shots, probs)
    return MeasurementRecord(
        n_qubits=state.n_qubits,
        unitary_index=unitary_index,
        angles=uset.angles,
        counts=_counts_to_map(counts, state.n_qubits),
        n_shots=n_shots,
        time=float(time),
        pattern=int(pattern),
    )


def prepare_state(config: QuenchConfig, noise: NoiseModel | None = None) -> QuantumState:
    """Neel state with preparation depolarizing applied (pure if noiseless)."""
    state = neel_state(config.n_qubits)
    noise = NoiseModel.from_config(config) if noise is None else noise
    if any(lam != 1.0 for lam in noise.prep):
        state = depolarize_all(state, noise.prep)
    return state


def config_hash(config: QuenchConfig, **extra) -> str:
    payload = {"config": asdict(config), **extra}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ProtocolRun:
    records: list[MeasurementRecord]
    provenance: dict = field(default_factory=dict)


def run_protocol(
    config: QuenchConfig,
    n_unitaries: int,
    n_shots: int,
    patterns: Sequence[Sequence[float] | None] | None = None,
    threads: int = 1,
    concatenate: bool = False,
) -> ProtocolRun:
    """Simulate ``n_unitaries`` records per (disorder pattern, time).

    ``patterns`` overrides ``config.disorder``; pattern ids are positions in
    that list. Records are ordered by pattern, then time, then unitary
    index, regardless of ``threads``.
    """
    if n_unitaries < 2:
        raise ValueError("need at least two unitaries")
    if n_shots < 2:
        raise ValueError("need at least two shots per unitary")
    noise = NoiseModel.from_config(config)
    patterns = [config.disorder] if patterns is None else list(patterns)
    seed = config.master_seed

    jobs = []
    for p_id, disorder in enumerate(patterns):
        cfg = _with_disorder(config, disorder)
        ham = build_hamiltonian(cfg)
        initial = prepare_state(cfg, noise)
        for t_id, t in enumerate(cfg.times):
            jobs.append((p_id, t_id, t, ham, initial))

    def run(job):
        p_id, t_id, t, ham, initial = job
        state = evolve(initial, ham, t)
        return [
            sample_record(
                state, u, n_shots, noise, seed, time=t, pattern=p_id, context=(p_id, t_id), concatenate=concatenate
            )
            for u in range(n_unitaries)
        ]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run, jobs))
    else:
        chunks = [run(job) for job in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    provenance = {
        "tool": "rmentropy",
        "tool_version": __version__,
        "config_hash": config_hash(config, patterns=[list(p) if p is not None else None for p in patterns]),
        "master_seed": seed,
        "n_unitaries": n_unitaries,
        "n_shots": n_shots,
        "n_patterns": len(patterns),
        "times": list(config.times),
        "concatenate": concatenate,
    }
    return ProtocolRun(records, provenance)


def _with_disorder(config: QuenchConfig, disorder) -> QuenchConfig:
    from dataclasses import replace

    return replace(config, disorder=None if disorder is None else tuple(disorder))
