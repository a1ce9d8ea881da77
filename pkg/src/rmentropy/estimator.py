"""Purity, Renyi-2 entropy and mutual information from randomized measurements.

For one random product unitary with outcome counts ``n_s`` (``N_M`` shots,
marginalized onto a subsystem of ``N_A`` sites of local dimension ``d``)
the unbiased per-unitary estimate is::

    X = d^{N_A} / (N_M (N_M - 1)) * (sum_{s,s'} (-d)^{-D[s,s']} n_s n_s' - sum_s n_s)

where ``D`` is the Hamming distance. Its average over unitaries is
``Tr(rho_A^2)``. Errors are delete-one jackknife over unitaries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .qstate import normalize_sites
from .records import MeasurementRecord

__all__ = [
    "InconsistentRecordsError",
    "PurityEstimate",
    "EntropyEstimate",
    "MutualInformation",
    "WitnessResult",
    "DisorderAverage",
    "kernel_apply",
    "kernel_transform",
    "x_from_counts",
    "x_from_probabilities",
    "unbiased_x",
    "unbiased_x_sparse",
    "RecordBatch",
    "jackknife",
    "purity_from_samples",
    "estimate_purity",
    "estimate_entropy",
    "connected_partitions",
    "all_masks",
    "all_partitions",
    "mutual_information",
    "entanglement_witness",
    "disorder_average",
    "DENSE_MAX_ENTRIES",
]

DENSE_MAX_ENTRIES = 2**24
_LN2 = np.log(2.0)


class InconsistentRecordsError(ValueError):
    """Records that cannot be combined (different N, N_M, or too few)."""


@dataclass(frozen=True, eq=False)
class PurityEstimate:
    sites: tuple[int, ...]
    x_per_unitary: np.ndarray
    purity: float
    stderr: float
    n_unitaries: int
    n_shots: int | None

    @property
    def n_a(self) -> int:
        return len(self.sites)


@dataclass(frozen=True)
class EntropyEstimate:
    sites: tuple[int, ...]
    purity: float
    stderr: float
    s2: float | None
    stderr_s2: float | None
    flag: str  # "ok" or "nonpositive_purity"

    @property
    def n_a(self) -> int:
        return len(self.sites)


@dataclass(frozen=True)
class MutualInformation:
    a: tuple[int, ...]
    b: tuple[int, ...]
    value: float
    stderr: float
    flag: str


@dataclass(frozen=True)
class WitnessResult:
    sites: tuple[int, ...]
    entangled: bool
    difference: float
    stderr: float
    margin: float  # difference in units of stderr

    @property
    def verdict(self) -> str:
        return "entangled" if self.entangled else "inconclusive"


@dataclass(frozen=True, eq=False)
class DisorderAverage:
    sites: tuple[int, ...]
    purity: float
    stderr: float
    s2_of_average: float | None
    stderr_s2: float | None
    mean_of_entropies: float | None
    n_patterns: int
    n_samples: int
    flag: str


# -- kernels -------------------------------------------------------------


def kernel_apply(values: np.ndarray, n_sites: int, d: int = 2) -> np.ndarray:
    """Apply ``K`` (1 on the diagonal, ``-1/d`` off it) along every site axis.

    ``values`` has shape ``(..., d**n_sites)``; the cost is
    ``O(n_sites * d**n_sites)`` per row.
    """
    lead = values.shape[:-1]
    if values.shape[-1] != d**n_sites:
        raise ValueError(f"expected last axis of length {d**n_sites}, got {values.shape[-1]}")
    t = values.reshape(lead + (d,) * n_sites).astype(float)
    nl = len(lead)
    for ax in range(nl, nl + n_sites):
        t = (1.0 + 1.0 / d) * t - t.sum(axis=ax, keepdims=True) / d
    return t.reshape(values.shape)


def kernel_transform(counts: np.ndarray, d: int = 2) -> float:
    """``sum_{s,s'} (-d)^{-D[s,s']} n_s n_s'`` for a dense counts vector."""
    counts = np.asarray(counts, dtype=float)
    n_sites = _n_sites(counts.shape[-1], d)
    return float(counts @ kernel_apply(counts, n_sites, d))


def _n_sites(length: int, d: int) -> int:
    n = int(round(np.log(length) / np.log(d))) if length > 1 else 0
    if n < 1 or d**n != length:
        raise ValueError(f"length {length} is not a positive power of {d}")
    return n


def x_from_counts(counts: np.ndarray, d: int = 2) -> np.ndarray:
    """Unbiased per-unitary ``X`` for dense counts, batched over leading axes."""
    counts = np.asarray(counts, dtype=float)
    n_sites = _n_sites(counts.shape[-1], d)
    shots = counts.sum(axis=-1)
    if np.any(shots < 2):
        raise ValueError("the unbiased estimator needs at least two shots")
    quad = np.sum(counts * kernel_apply(counts, n_sites, d), axis=-1)
    return d**n_sites * (quad - shots) / (shots * (shots - 1))


def x_from_probabilities(probs: np.ndarray, d: int = 2) -> np.ndarray:
    """Per-unitary ``X`` from exact outcome probabilities (infinite-shot limit)."""
    probs = np.asarray(probs, dtype=float)
    n_sites = _n_sites(probs.shape[-1], d)
    return d**n_sites * np.sum(probs * kernel_apply(probs, n_sites, d), axis=-1)


def _pair_sum_sparse(bits: np.ndarray, counts: np.ndarray, d: int) -> float:
    dist = (bits[:, None, :] != bits[None, :, :]).sum(axis=-1)
    weights = (-float(d)) ** (-dist.astype(float))
    c = counts.astype(float)
    return float(c @ weights @ c)


def unbiased_x_sparse(record: MeasurementRecord, sites: Iterable[int], d: int = 2) -> float:
    """Same value as :func:`unbiased_x`, via pairs of observed bitstrings.

    Costs ``O(M^2 N_A)`` for ``M`` distinct outcomes; preferable when
    ``M^2`` is much smaller than ``d^{N_A}``.
    """
    sites = normalize_sites(sites, record.n_qubits)
    if record.n_shots < 2:
        raise ValueError("the unbiased estimator needs at least two shots")
    bits, counts = record.outcome_bits()
    bits = bits[:, [s - 1 for s in sites]]
    m = record.n_shots
    return d ** len(sites) * (_pair_sum_sparse(bits, counts, d) - m) / (m * (m - 1))


def _use_dense(n_sites: int, n_distinct: int, d: int) -> bool:
    size = d**n_sites
    return size <= DENSE_MAX_ENTRIES and size <= 64 * n_distinct**2


def unbiased_x(record: MeasurementRecord, sites: Iterable[int], d: int = 2, method: str = "auto") -> float:
    """Unbiased per-unitary ``X`` of ``record`` on ``sites``.

    ``method`` is ``"dense"`` (kernel transform of the marginal counts),
    ``"sparse"`` (pairwise over observed outcomes) or ``"auto"``.
    """
    sites = normalize_sites(sites, record.n_qubits)
    if record.n_shots < 2:
        raise ValueError("the unbiased estimator needs at least two shots")
    if method == "auto":
        method = "dense" if _use_dense(len(sites), len(record.counts), d) else "sparse"
    if method == "sparse":
        return unbiased_x_sparse(record, sites, d)
    if method != "dense":
        raise ValueError(f"unknown method {method!r}")
    return float(x_from_counts(record.marginal_counts(sites), d))


class RecordBatch:
    """Records of one (time, pattern) group, prepared for many subsystems.

    For up to 16 qubits the full counts matrix is kept so that any
    subsystem marginal is a single reshape-and-sum.
    """

    def __init__(self, records: Sequence[MeasurementRecord], min_records: int = 2):
        records = list(records)
        if len(records) < min_records:
            raise InconsistentRecordsError(f"need at least {min_records} records, got {len(records)}")
        n = {r.n_qubits for r in records}
        m = {r.n_shots for r in records}
        if len(n) != 1:
            raise InconsistentRecordsError(f"records disagree on n_qubits: {sorted(n)}")
        if len(m) != 1:
            raise InconsistentRecordsError(f"records disagree on n_shots: {sorted(m)}")
        self.records = records
        self.n_qubits = n.pop()
        self.n_shots = m.pop()
        if self.n_shots < 2:
            raise InconsistentRecordsError("records need at least two shots")
        self.n_distinct = np.array([len(r.counts) for r in records])
        self._full = np.stack([r.counts_array() for r in records]) if self.n_qubits <= 16 else None

    def __len__(self) -> int:
        return len(self.records)

    def marginal(self, sites: Sequence[int]) -> np.ndarray:
        sites = normalize_sites(sites, self.n_qubits)
        if self._full is None:
            return np.stack([r.marginal_counts(sites) for r in self.records])
        n = self.n_qubits
        t = self._full.reshape((len(self),) + (2,) * n)
        drop = tuple(1 + a for a in range(n) if a + 1 not in sites)
        return t.sum(axis=drop).reshape(len(self), -1)

    def x_values(self, sites: Iterable[int], method: str = "auto") -> np.ndarray:
        sites = normalize_sites(sites, self.n_qubits)
        n_a = len(sites)
        if method == "auto":
            dense = np.array([_use_dense(n_a, int(m), 2) for m in self.n_distinct])
        elif method in ("dense", "sparse"):
            dense = np.full(len(self), method == "dense")
        else:
            raise ValueError(f"unknown method {method!r}")
        out = np.empty(len(self))
        if dense.any():
            if dense.all():
                out[:] = x_from_counts(self.marginal(sites))
            else:
                idx = np.flatnonzero(dense)
                out[idx] = x_from_counts(np.stack([self.records[i].marginal_counts(sites) for i in idx]))
        for i in np.flatnonzero(~dense):
            out[i] = unbiased_x_sparse(self.records[i], sites)
        return out


def _batch(records) -> RecordBatch:
    return records if isinstance(records, RecordBatch) else RecordBatch(records)


# -- statistics ----------------------------------------------------------


def jackknife(samples: np.ndarray, func: Callable[[np.ndarray], np.ndarray] | None = None):
    """Delete-one jackknife for a function of column means.

    ``samples`` is ``(n,)`` or ``(n, k)``; ``func`` maps an array of means
    with last axis ``k`` to the statistic (vectorized over leading axes).
    Returns ``(estimate, stderr)`` where the estimate is ``func`` of the
    full-sample means.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ValueError("jackknife needs at least two samples")
    func = (lambda m: m[..., 0]) if func is None else func
    total = x.sum(axis=0)
    full = func(total / n)
    loo = (total[None, :] - x) / (n - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        reps = np.asarray(func(loo), dtype=float)
    var = (n - 1) / n * np.sum((reps - reps.mean()) ** 2)
    return float(full), float(np.sqrt(var))


def purity_from_samples(x: np.ndarray, sites: Sequence[int], n_shots: int | None = None) -> PurityEstimate:
    """Wrap per-unitary ``X`` values into a :class:`PurityEstimate`."""
    x = np.asarray(x, dtype=float)
    mean, err = jackknife(x)
    return PurityEstimate(tuple(sites), x, float(np.mean(x)), err, len(x), n_shots)


def estimate_purity(records, sites: Iterable[int], method: str = "auto") -> PurityEstimate:
    """Ensemble-averaged ``X`` over the records of one state."""
    batch = _batch(records)
    sites = normalize_sites(sites, batch.n_qubits)
    return purity_from_samples(batch.x_values(sites, method), sites, batch.n_shots)


def estimate_entropy(est: PurityEstimate) -> EntropyEstimate:
    """``S2 = -log2(purity)`` with first-order error; flagged if purity <= 0."""
    if est.purity > 0:
        s2 = float(-np.log2(est.purity))
        return EntropyEstimate(est.sites, est.purity, est.stderr, s2, est.stderr / (est.purity * _LN2), "ok")
    return EntropyEstimate(est.sites, est.purity, est.stderr, None, None, "nonpositive_purity")


def connected_partitions(n_qubits: int) -> list[tuple[int, ...]]:
    """Subsystems ``[1 -> i]`` for ``i = 1..N``."""
    return [tuple(range(1, i + 1)) for i in range(1, n_qubits + 1)]


def all_masks(n_qubits: int) -> list[tuple[int, ...]]:
    """All ``2^N - 1`` non-empty subsystems, by size then lexicographically."""
    sites = range(1, n_qubits + 1)
    return [c for k in range(1, n_qubits + 1) for c in itertools.combinations(sites, k)]


def all_partitions(records, cap: int = 12) -> dict[tuple[int, ...], EntropyEstimate]:
    """Entropy of every non-empty subsystem from one record set."""
    batch = _batch(records)
    if batch.n_qubits > cap:
        raise ValueError(f"{batch.n_qubits} qubits exceeds the all-partition cap of {cap}")
    return {m: estimate_entropy(estimate_purity(batch, m)) for m in all_masks(batch.n_qubits)}


def _neg_log2(p):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(p > 0, -np.log2(np.where(p > 0, p, 1.0)), np.nan)


def mutual_information(records, a: Iterable[int], b: Iterable[int]) -> MutualInformation:
    """``I2(A:B) = S2(A) + S2(B) - S2(AB)`` with a joint jackknife error."""
    batch = _batch(records)
    a = normalize_sites(a, batch.n_qubits)
    b = normalize_sites(b, batch.n_qubits)
    if set(a) & set(b):
        raise ValueError(f"subsystems {a} and {b} overlap")
    ab = tuple(sorted(a + b))
    x = np.column_stack([batch.x_values(a), batch.x_values(b), batch.x_values(ab)])

    def mi(m):
        return _neg_log2(m[..., 0]) + _neg_log2(m[..., 1]) - _neg_log2(m[..., 2])

    value, err = jackknife(x, mi)
    flag = "ok" if np.isfinite(value) and np.isfinite(err) else "nonpositive_purity"
    return MutualInformation(a, b, value, err, flag)


def entanglement_witness(records, sites: Iterable[int], n_sigma: float = 3.0) -> WitnessResult:
    """Flag bipartite entanglement when ``S2(A) - S2(full) > n_sigma * stderr``."""
    batch = _batch(records)
    n = batch.n_qubits
    sites = normalize_sites(sites, n)
    if len(sites) == n:
        raise ValueError("the witness needs a proper subsystem")
    full = tuple(range(1, n + 1))
    x = np.column_stack([batch.x_values(sites), batch.x_values(full)])
    diff, err = jackknife(x, lambda m: _neg_log2(m[..., 0]) - _neg_log2(m[..., 1]))
    if not (np.isfinite(diff) and np.isfinite(err)):
        return WitnessResult(sites, False, diff, err, float("nan"))
    margin = diff / err if err > 0 else (np.inf if diff > 0 else 0.0)
    return WitnessResult(sites, bool(diff > n_sigma * err), diff, err, float(margin))


def disorder_average(estimates: Sequence[PurityEstimate]) -> DisorderAverage:
    """Merge per-pattern estimates of one subsystem into a disorder average.

    All ``(pattern, unitary)`` samples are pooled: their mean estimates the
    disorder-averaged purity, with a delete-one jackknife over the pooled
    samples. ``mean_of_entropies`` averages per-pattern ``-log2`` values and
    is only reported when every per-pattern purity is positive.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one pattern")
    sites = {e.sites for e in estimates}
    if len(sites) != 1:
        raise InconsistentRecordsError(f"estimates refer to different subsystems: {sorted(sites)}")
    pooled = np.concatenate([e.x_per_unitary for e in estimates])
    est = purity_from_samples(pooled, estimates[0].sites)
    ent = estimate_entropy(est)
    per = np.array([e.purity for e in estimates])
    mean_s = float(np.mean(-np.log2(per))) if np.all(per > 0) else None
    return DisorderAverage(
        est.sites, est.purity, est.stderr, ent.s2, ent.stderr_s2, mean_s, len(estimates), len(pooled), ent.flag
    )


def estimates_by_group(
    groups: Mapping[tuple, Sequence[MeasurementRecord]], sites: Iterable[int]
) -> dict[tuple, PurityEstimate]:
    return {key: estimate_purity(recs, sites) for key, recs in groups.items()}
