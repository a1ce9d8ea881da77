import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rmentropy.dynamics import NoiseParams, QuenchConfig
from rmentropy.qstate import (
    apply_depolarizing,
    apply_local_unitaries,
    depolarize_all,
    exact_purity,
    neel_state,
    random_mixed_state,
    random_pure_state,
)
from rmentropy.randunitary import cue_matrix
from rmentropy.sampler import (
    NoiseModel,
    calibrate_prep_lambda,
    depolarize_probabilities,
    outcome_probabilities,
    prepare_state,
    run_protocol,
    sample_counts,
    sample_record,
)


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_probabilities_match_full_unitary(n, seed):
    rng = np.random.default_rng(seed)
    mats = [cue_matrix(rng) for _ in range(n)]
    u = kron_all(mats)
    psi = random_pure_state(n, rng)
    assert np.allclose(outcome_probabilities(psi, mats), np.abs(u @ psi.data) ** 2, atol=1e-12)
    rho = random_mixed_state(n, rng)
    want = np.real(np.diag(u @ rho.data @ u.conj().T))
    assert np.allclose(outcome_probabilities(rho, mats), want, atol=1e-12)
    assert np.allclose(outcome_probabilities(psi.to_mixed(), mats), outcome_probabilities(psi, mats), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_readout_depolarizing_matches_channel(n, seed, lam):
    rng = np.random.default_rng(seed)
    rho = random_mixed_state(n, rng)
    mats = [cue_matrix(rng) for _ in range(n)]
    rotated = apply_local_unitaries(rho, mats)
    for q in range(1, n + 1):
        rotated = apply_depolarizing(rotated, q, lam)
    want = np.real(np.diag(rotated.data))
    got = outcome_probabilities(rho, mats, meas_lambdas=[lam] * n)
    assert np.allclose(got, want, atol=1e-12)


def test_subsystem_marginal():
    rng = np.random.default_rng(5)
    rho = random_mixed_state(3, rng)
    mats = [cue_matrix(rng) for _ in range(3)]
    full = outcome_probabilities(rho, mats).reshape(2, 2, 2)
    assert np.allclose(outcome_probabilities(rho, mats, subsystem=[1, 3]), full.sum(axis=1).reshape(-1))


def test_depolarize_probabilities_limits():
    p = np.array([[0.7, 0.1], [0.15, 0.05]])
    assert np.allclose(depolarize_probabilities(p, [1.0, 1.0]), p)
    assert np.allclose(depolarize_probabilities(p, [0.0, 0.0]), 0.25)


def test_prep_calibration_hits_target_purity():
    lam = calibrate_prep_lambda(10, 0.92)
    assert ((1 + lam**2) / 2) ** 10 == pytest.approx(0.92, abs=1e-12)
    assert lam == pytest.approx(0.99166, abs=1e-5)
    state = depolarize_all(neel_state(4), [calibrate_prep_lambda(4, 0.9)] * 4)
    assert exact_purity(state) == pytest.approx(0.9, abs=1e-12)
    with pytest.raises(ValueError):
        calibrate_prep_lambda(3, 0.1)


def test_prepare_state_pure_when_noiseless():
    cfg = QuenchConfig(4)
    assert prepare_state(cfg).kind == "pure"
    noisy = QuenchConfig(4, noise=NoiseParams(lambda_prep=(0.9,) * 4))
    assert prepare_state(noisy).kind == "mixed"


def test_multinomial_counts_follow_probabilities():
    rng = np.random.default_rng(0)
    p = np.array([0.5, 0.25, 0.15, 0.1])
    draws = np.array([sample_counts(rng, 20, p) for _ in range(4000)])
    assert np.all(draws.sum(axis=1) == 20)
    observed = draws.sum(axis=0)
    chi2 = np.sum((observed - 80000 * p) ** 2 / (80000 * p))
    assert chi2 < stats.chi2.ppf(0.999, 3)


def test_sample_record_deterministic_and_valid():
    state = neel_state(3)
    noise = NoiseModel.uniform(3, meas=0.98)
    a = sample_record(state, 4, 50, noise, seed=9, time=0.1, pattern=2)
    b = sample_record(state, 4, 50, noise, seed=9, time=0.1, pattern=2)
    assert a.counts == b.counts and a.angles == b.angles
    assert sum(a.counts.values()) == 50
    assert (a.time, a.pattern, a.unitary_index) == (0.1, 2, 4)
    with pytest.raises(ValueError):
        sample_record(state, 0, 1, noise, seed=9)


def test_run_protocol_independent_of_threads():
    cfg = QuenchConfig(4, times=(0.0, 1e-3, 2e-3), master_seed=3)
    patterns = [None, (100.0, -50.0, 20.0, 0.0)]
    one = run_protocol(cfg, 6, 30, patterns=patterns, threads=1)
    many = run_protocol(cfg, 6, 30, patterns=patterns, threads=3)
    assert len(one.records) == 2 * 3 * 6
    assert [r.counts for r in one.records] == [r.counts for r in many.records]
    assert one.provenance == many.provenance
    assert one.provenance["master_seed"] == 3


def test_run_protocol_validates():
    with pytest.raises(ValueError):
        run_protocol(QuenchConfig(2), 1, 10)
    with pytest.raises(ValueError):
        run_protocol(QuenchConfig(2), 10, 1)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel((0.9,), (0.9, 0.9))
    with pytest.raises(ValueError):
        NoiseModel((1.5,), (1.0,))
