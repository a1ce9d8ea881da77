"""Measurement records and their line-oriented JSON file format.

One record per line. Keys are written in a fixed order, floats with 17
significant digits, counts sorted by bitstring, so that
write -> read -> write reproduces the file byte for byte. Bitstrings have
one character per qubit, leftmost = qubit 1, ``'1'`` = up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "SCHEMA_VERSION",
    "RecordFormatError",
    "MeasurementRecord",
    "format_float",
    "record_to_line",
    "record_from_line",
    "write_records",
    "read_records",
    "group_records",
]

SCHEMA_VERSION = 1
_KEYS = {"schema_version", "n_qubits", "unitary_index", "time", "pattern", "n_shots", "angles", "counts", "matrices"}


class RecordFormatError(ValueError):
    """A record line could not be parsed or violates the record invariants."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Outcome counts for one random product unitary.

    ``time`` (seconds) and ``pattern`` (disorder realization id) label the
    state that was measured; ``matrices`` optionally carries the per-qubit
    unitaries for data that was not generated from angle triples.
    """

    n_qubits: int
    unitary_index: int
    angles: tuple[tuple[float, float, float], ...]
    counts: Mapping[str, int]
    n_shots: int
    time: float = 0.0
    pattern: int = 0
    matrices: np.ndarray | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        n = self.n_qubits
        if n < 1:
            raise RecordFormatError("n_qubits must be >= 1")
        if self.schema_version > SCHEMA_VERSION:
            raise RecordFormatError(
                f"record schema_version {self.schema_version} is newer than supported version {SCHEMA_VERSION}"
            )
        if len(self.angles) != n or any(len(a) != 3 for a in self.angles):
            raise RecordFormatError(f"expected {n} angle triples")
        total = 0
        for bits, c in self.counts.items():
            if len(bits) != n or set(bits) - {"0", "1"}:
                raise RecordFormatError(f"invalid bitstring {bits!r} for {n} qubits")
            if int(c) < 0:
                raise RecordFormatError(f"negative count for {bits}")
            total += int(c)
        if total != self.n_shots:
            raise RecordFormatError(f"counts sum to {total}, n_shots is {self.n_shots}")
        if self.matrices is not None and np.shape(self.matrices) != (n, 2, 2):
            raise RecordFormatError("matrices must have shape (n_qubits, 2, 2)")
        object.__setattr__(self, "counts", {k: int(self.counts[k]) for k in sorted(self.counts) if self.counts[k]})

    def counts_array(self) -> np.ndarray:
        """Dense counts over all ``2^N`` outcomes (qubit 1 = most-significant bit)."""
        out = np.zeros(2**self.n_qubits, dtype=np.int64)
        for bits, c in self.counts.items():
            out[int(bits, 2)] = c
        return out

    def outcome_bits(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct observed outcomes as a ``(M, N)`` 0/1 array, with their counts."""
        keys = list(self.counts)
        bits = np.array([[ch == "1" for ch in k] for k in keys], dtype=np.int8).reshape(len(keys), self.n_qubits)
        return bits, np.array([self.counts[k] for k in keys], dtype=np.int64)

    def marginal_counts(self, sites: Sequence[int]) -> np.ndarray:
        """Dense counts marginalized onto ``sites`` (1-based, sorted)."""
        bits, cnt = self.outcome_bits()
        sub = bits[:, [s - 1 for s in sites]].astype(np.int64)
        weights = 1 << np.arange(len(sites) - 1, -1, -1)
        return np.bincount(sub @ weights, weights=cnt, minlength=2 ** len(sites)).astype(np.int64)

    def unitary_matrices(self) -> np.ndarray:
        """Per-qubit unitaries, from ``matrices`` if present, else from the angles."""
        if self.matrices is not None:
            return np.asarray(self.matrices)
        from .randunitary import zyz_matrix

        return np.stack([zyz_matrix(a) for a in self.angles])


def format_float(x: float) -> str:
    s = format(float(x), ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def record_to_line(rec: MeasurementRecord) -> str:
    angles = ",".join("[" + ",".join(format_float(a) for a in tri) + "]" for tri in rec.angles)
    counts = ",".join(f"{json.dumps(k)}:{v}" for k, v in rec.counts.items())
    parts = [
        f'"schema_version":{rec.schema_version}',
        f'"n_qubits":{rec.n_qubits}',
        f'"unitary_index":{rec.unitary_index}',
        f'"time":{format_float(rec.time)}',
        f'"pattern":{rec.pattern}',
        f'"n_shots":{rec.n_shots}',
        f'"angles":[{angles}]',
        f'"counts":{{{counts}}}',
    ]
    if rec.matrices is not None:
        mats = ",".join(
            "[" + ",".join("[" + ",".join(f"[{format_float(z.real)},{format_float(z.imag)}]" for z in row) + "]" for row in m) + "]"
            for m in np.asarray(rec.matrices)
        )
        parts.append(f'"matrices":[{mats}]')
    return "{" + ",".join(parts) + "}"


def record_from_line(line: str, line_number: int | None = None) -> MeasurementRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"malformed JSON ({exc.msg})", line_number) from None
    if not isinstance(obj, dict):
        raise RecordFormatError("record must be a JSON object", line_number)
    unknown = set(obj) - _KEYS
    if unknown:
        raise RecordFormatError(f"unknown keys {sorted(unknown)}", line_number)
    missing = {"schema_version", "n_qubits", "unitary_index", "n_shots", "angles", "counts"} - set(obj)
    if missing:
        raise RecordFormatError(f"missing keys {sorted(missing)}", line_number)
    try:
        matrices = None
        if obj.get("matrices") is not None:
            m = np.asarray(obj["matrices"], dtype=float)
            matrices = m[..., 0] + 1j * m[..., 1]
        return MeasurementRecord(
            schema_version=int(obj["schema_version"]),
            n_qubits=int(obj["n_qubits"]),
            unitary_index=int(obj["unitary_index"]),
            angles=tuple(tuple(float(a) for a in tri) for tri in obj["angles"]),
            counts={str(k): int(v) for k, v in obj["counts"].items()},
            n_shots=int(obj["n_shots"]),
            time=float(obj.get("time", 0.0)),
            pattern=int(obj.get("pattern", 0)),
            matrices=matrices,
        )
    except RecordFormatError as exc:
        raise RecordFormatError(str(exc), line_number) from None
    except (TypeError, ValueError, AttributeError) as exc:
        raise RecordFormatError(f"bad field value ({exc})", line_number) from None


def write_records(records: Iterable[MeasurementRecord], dest: str | Path | IO[str]) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            write_records(records, fh)
        return
    for rec in records:
        dest.write(record_to_line(rec) + "\n")


def iter_records(src: str | Path | IO[str]) -> Iterator[MeasurementRecord]:
    if isinstance(src, (str, Path)):
        with open(src, encoding="utf-8") as fh:
            yield from iter_records(fh)
        return
    for num, line in enumerate(src, start=1):
        if line.strip():
            yield record_from_line(line, num)


def read_records(src: str | Path | IO[str]) -> list[MeasurementRecord]:
    return list(iter_records(src))


def group_records(records: Iterable[MeasurementRecord]) -> dict[tuple[float, int], list[MeasurementRecord]]:
    """Group records by ``(time, pattern)``, keys sorted, unitary order kept."""
    groups: dict[tuple[float, int], list[MeasurementRecord]] = {}
    for rec in records:
        groups.setdefault((rec.time, rec.pattern), []).append(rec)
    return dict(sorted(groups.items()))
