import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rmentropy.estimator import (
    InconsistentRecordsError,
    PurityEstimate,
    RecordBatch,
    all_masks,
    all_partitions,
    connected_partitions,
    disorder_average,
    entanglement_witness,
    estimate_entropy,
    estimate_purity,
    jackknife,
    kernel_transform,
    mutual_information,
    purity_from_samples,
    unbiased_x,
    unbiased_x_sparse,
    x_from_counts,
    x_from_probabilities,
)
from rmentropy.qstate import QuantumState, bell_state, product_state
from rmentropy.randunitary import sample_unitary_set
from rmentropy.records import MeasurementRecord
from rmentropy.sampler import outcome_probabilities, sample_record


def naive_pair_sum(counts, n_sites, d=2):
    """sum_{s,s'} (-d)^(-D[s,s']) n_s n_s' by explicit double loop."""
    outcomes = list(itertools.product(range(d), repeat=n_sites))
    total = 0.0
    for a, s in enumerate(outcomes):
        if not counts[a]:
            continue
        for b, t in enumerate(outcomes):
            dist = sum(x != y for x, y in zip(s, t))
            total += (-d) ** (-dist) * counts[a] * counts[b]
    return total


def naive_x(counts, n_sites, d=2):
    m = counts.sum()
    return d**n_sites * (naive_pair_sum(counts, n_sites, d) - m) / (m * (m - 1))


def compositions(total, parts):
    """All count vectors of ``parts`` non-negative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def exact_expectation(probs, n_shots):
    """E[X-hat] over every multinomial outcome of ``n_shots`` draws."""
    total = 0.0
    for c in compositions(n_shots, len(probs)):
        weight = stats.multinomial.pmf(c, n_shots, probs)
        total += weight * x_from_counts(np.array(c))
    return total


def record_from_counts(counts, n):
    return MeasurementRecord(
        n, 0, ((0.0, 0.0, 0.0),) * n, {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c}, int(np.sum(counts))
    )


@pytest.mark.parametrize("n_sites", [1, 2])
@pytest.mark.parametrize("n_shots", [2, 3, 4])
def test_unbiased_by_exhaustive_enumeration(n_sites, n_shots):
    rng = np.random.default_rng(10 * n_sites + n_shots)
    for _ in range(3):
        p = rng.dirichlet(np.ones(2**n_sites))
        assert exact_expectation(p, n_shots) == pytest.approx(float(x_from_probabilities(p)), abs=1e-12)


def test_three_shot_single_qubit_closed_form():
    p0 = 0.3
    p = np.array([p0, 1 - p0])
    assert exact_expectation(p, 3) == pytest.approx(2 * (p0**2 + (1 - p0) ** 2 - p0 * (1 - p0)), abs=1e-14)


def test_frozen_values():
    # |0> measured in its eigenbasis: X = 2
    assert x_from_probabilities(np.array([1.0, 0.0])) == pytest.approx(2.0)
    # maximally mixed qubit pair: every unitary gives X = purity = 1/4
    assert x_from_probabilities(np.full(4, 0.25)) == pytest.approx(0.25)
    # two shots, both 0 on one qubit: 2 * (4 - 2) / 2 = 2
    assert x_from_counts(np.array([2, 0])) == pytest.approx(2.0)
    # one shot each: 2 * (1 + 1 - 1 - 2) / 2 = -1
    assert x_from_counts(np.array([1, 1])) == pytest.approx(-1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 60), st.integers(0, 2**32 - 1))
def test_kernel_paths_agree_with_naive_sum(n, shots, seed):
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, rng.dirichlet(np.ones(2**n) * 0.3))
    rec = record_from_counts(counts, n)
    want = naive_x(counts, n)
    sites = tuple(range(1, n + 1))
    assert unbiased_x(rec, sites, method="dense") == pytest.approx(want, rel=1e-9, abs=1e-9)
    assert unbiased_x(rec, sites, method="sparse") == pytest.approx(want, rel=1e-9, abs=1e-9)
    assert kernel_transform(counts) == pytest.approx(naive_pair_sum(counts, n), rel=1e-9, abs=1e-9)


def test_subsystem_uses_marginal_counts():
    rng = np.random.default_rng(2)
    counts = rng.multinomial(100, rng.dirichlet(np.ones(8)))
    rec = record_from_counts(counts, 3)
    marg = counts.reshape(2, 2, 2).sum(axis=1).reshape(-1)
    assert unbiased_x(rec, (1, 3)) == pytest.approx(naive_x(marg, 2))
    assert unbiased_x_sparse(rec, (1, 3)) == pytest.approx(naive_x(marg, 2))


def test_estimator_rejects_single_shot():
    rec = record_from_counts(np.array([1, 0]), 1)
    with pytest.raises(ValueError):
        unbiased_x(rec, (1,))
    with pytest.raises(ValueError):
        unbiased_x(rec, (1,), method="magic")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=60))
def test_jackknife_of_mean_is_standard_error(xs):
    x = np.array(xs)
    est, err = jackknife(x)
    assert est == pytest.approx(x.mean(), abs=1e-12)
    assert err == pytest.approx(x.std(ddof=1) / np.sqrt(len(x)), rel=1e-9, abs=1e-12)


def test_jackknife_of_nonlinear_function_matches_delta_method():
    rng = np.random.default_rng(0)
    x = rng.normal(0.5, 0.05, 4000)
    est, err = jackknife(x, lambda m: -np.log2(m[..., 0]))
    delta = x.std(ddof=1) / np.sqrt(len(x)) / (x.mean() * np.log(2))
    assert est == pytest.approx(-np.log2(x.mean()))
    assert err == pytest.approx(delta, rel=0.02)


def test_jackknife_needs_two_samples():
    with pytest.raises(ValueError):
        jackknife(np.array([1.0]))


def test_nonpositive_purity_flagged_not_clipped():
    est = purity_from_samples(np.array([-0.4, 0.1, -0.2]), (1,))
    ent = estimate_entropy(est)
    assert ent.purity < 0
    assert ent.flag == "nonpositive_purity" and ent.s2 is None
    ok = estimate_entropy(purity_from_samples(np.array([0.4, 0.6]), (1,)))
    assert ok.flag == "ok" and ok.s2 == pytest.approx(1.0)


def records_for(state, n_unitaries, shots, seed=0):
    return [sample_record(state, u, shots, None, seed) for u in range(n_unitaries)]


def test_batch_rejects_mixed_shots_and_sizes():
    a = record_from_counts(np.array([2, 0]), 1)
    b = record_from_counts(np.array([2, 1]), 1)
    with pytest.raises(InconsistentRecordsError):
        RecordBatch([a, b])
    c = record_from_counts(np.array([1, 1, 0, 0]), 2)
    with pytest.raises(InconsistentRecordsError):
        RecordBatch([a, c])
    with pytest.raises(InconsistentRecordsError):
        RecordBatch([a])


def test_batch_auto_matches_explicit_methods():
    recs = records_for(product_state([0, 1, 0]), 20, 30)
    batch = RecordBatch(recs)
    for sites in ((1,), (1, 3), (1, 2, 3)):
        dense = batch.x_values(sites, "dense")
        assert np.allclose(batch.x_values(sites, "sparse"), dense)
        assert np.allclose(batch.x_values(sites), dense)
        assert np.allclose([unbiased_x(r, sites) for r in recs], dense)


def test_mask_enumeration():
    assert connected_partitions(3) == [(1,), (1, 2), (1, 2, 3)]
    masks = all_masks(4)
    assert len(masks) == 15 and len(set(masks)) == 15


def test_all_partitions_counts_and_cap():
    recs = records_for(product_state([0, 1, 1]), 10, 20)
    assert len(all_partitions(recs)) == 7
    with pytest.raises(ValueError):
        all_partitions(recs, cap=2)


def test_bell_state_mutual_information_and_witness():
    recs = records_for(bell_state(), 400, 200, seed=4)
    mi = mutual_information(recs, (1,), (2,))
    assert mi.value == pytest.approx(2.0, abs=4 * mi.stderr + 0.05)
    wit = entanglement_witness(recs, (1,))
    assert wit.entangled and wit.verdict == "entangled"


def test_product_state_has_no_witness():
    recs = records_for(product_state([0, 1]), 400, 200, seed=5)
    assert not entanglement_witness(recs, (1,)).entangled
    mi = mutual_information(recs, (1,), (2,))
    assert abs(mi.value) < 4 * mi.stderr + 0.05


def test_mutual_information_rejects_overlap():
    recs = records_for(product_state([0, 1]), 5, 10)
    with pytest.raises(ValueError):
        mutual_information(recs, (1,), (1, 2))


def test_single_pattern_disorder_average_is_plain_estimate():
    recs = records_for(product_state([0, 1]), 30, 50)
    est = estimate_purity(recs, (1, 2))
    avg = disorder_average([est])
    assert avg.purity == est.purity and avg.stderr == est.stderr
    assert avg.n_patterns == 1 and avg.n_samples == 30


def test_disorder_average_pools_samples():
    a = PurityEstimate((1,), np.array([0.5, 0.7]), 0.6, 0.1, 2, 10)
    b = PurityEstimate((1,), np.array([0.9, 0.9, 0.6]), 0.8, 0.1, 3, 10)
    avg = disorder_average([a, b])
    assert avg.purity == pytest.approx(np.mean([0.5, 0.7, 0.9, 0.9, 0.6]))
    assert avg.mean_of_entropies == pytest.approx(np.mean(-np.log2([0.6, 0.8])))
    with pytest.raises(InconsistentRecordsError):
        disorder_average([a, PurityEstimate((2,), np.array([0.5, 0.5]), 0.5, 0.0, 2, 10)])


def test_maximally_mixed_state_estimate_is_exact_per_unitary():
    rho = QuantumState(np.eye(4) / 4, 2)
    for u in range(5):
        p = outcome_probabilities(rho, sample_unitary_set(0, u, 2))
        assert x_from_probabilities(p) == pytest.approx(0.25)
