"""Renyi-2 entropies from randomized measurements on simulated spin chains."""

__version__ = "0.1.0"

from .qstate import QuantumState, exact_purity, neel_state, partial_trace  # noqa: E402
from .dynamics import NoiseParams, QuenchConfig, build_hamiltonian, evolve  # noqa: E402
from .records import MeasurementRecord, read_records, write_records  # noqa: E402
from .sampler import NoiseModel, run_protocol, sample_record  # noqa: E402
from .estimator import (  # noqa: E402
    all_partitions,
    disorder_average,
    entanglement_witness,
    estimate_entropy,
    estimate_purity,
    mutual_information,
    unbiased_x,
)

__all__ = [
    "QuantumState",
    "exact_purity",
    "neel_state",
    "partial_trace",
    "NoiseParams",
    "QuenchConfig",
    "build_hamiltonian",
    "evolve",
    "MeasurementRecord",
    "read_records",
    "write_records",
    "NoiseModel",
    "run_protocol",
    "sample_record",
    "all_partitions",
    "disorder_average",
    "entanglement_witness",
    "estimate_entropy",
    "estimate_purity",
    "mutual_information",
    "unbiased_x",
]
