import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from rmentropy.dynamics import (
    NoiseParams,
    QuenchConfig,
    build_hamiltonian,
    coupling_matrix,
    dense_hamiltonian,
    draw_disorder,
    evolve,
    excitation_decay_p,
    excitation_number_dist,
    excitation_number_distribution,
    magnetization,
    staggered_magnetization,
)
from rmentropy.qstate import depolarize_all, exact_renyi2, neel_state, partial_trace, random_mixed_state, random_pure_state


def test_couplings_follow_power_law():
    j = coupling_matrix(5, 420.0, 1.24)
    assert j[0, 0] == 0
    assert j[0, 3] == pytest.approx(420.0 / 3**1.24)
    assert np.allclose(j, j.T)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_blocks_match_pauli_construction(n):
    rng = np.random.default_rng(n)
    cfg = QuenchConfig(n, b_field=37.0, disorder=tuple(rng.uniform(-100, 100, n)))
    assert np.allclose(build_hamiltonian(cfg).dense(), dense_hamiltonian(cfg), atol=1e-10)


def test_hamiltonian_conserves_excitations():
    cfg = QuenchConfig(4, disorder=(10.0, -5.0, 3.0, 1.0))
    h = dense_hamiltonian(cfg)
    bits = (np.arange(16)[:, None] >> np.arange(4)[None, :]) & 1
    total_z = np.diag(bits.sum(axis=1).astype(float))
    assert np.allclose(h @ total_z, total_z @ h)


@pytest.mark.parametrize("t", [0.0, 1e-3, 5e-3])
def test_evolution_matches_matrix_exponential(t):
    cfg = QuenchConfig(4, b_field=50.0, disorder=(100.0, -20.0, 3.0, 40.0))
    rng = np.random.default_rng(0)
    u = expm(-1j * dense_hamiltonian(cfg) * t)
    psi = random_pure_state(4, rng)
    assert np.allclose(evolve(psi, cfg, t).data, u @ psi.data, atol=1e-10)
    rho = random_mixed_state(4, rng)
    assert np.allclose(evolve(rho, cfg, t).data, u @ rho.data @ u.conj().T, atol=1e-10)


def test_evolution_rejects_negative_time():
    with pytest.raises(ValueError):
        evolve(neel_state(2), QuenchConfig(2), -1.0)


def test_neel_observables():
    state = neel_state(6)
    assert staggered_magnetization(state) == pytest.approx(1.0)
    assert np.allclose(magnetization(state), [-1, 1, -1, 1, -1, 1])
    dist = excitation_number_distribution(state)
    assert dist[3] == pytest.approx(1.0)


def test_excitations_conserved_during_quench():
    cfg = QuenchConfig(6)
    state = evolve(neel_state(6), cfg, 3e-3)
    assert excitation_number_distribution(state)[3] == pytest.approx(1.0)
    assert staggered_magnetization(state) < 0.9


def test_uniform_field_leaves_subsystem_purities_unchanged():
    base = QuenchConfig(6)
    field = QuenchConfig(6, b_field=2 * np.pi * 3000)
    start = depolarize_all(neel_state(6), [0.97] * 6)
    for t in (1e-3, 4e-3):
        a = evolve(start, base, t)
        b = evolve(start, field, t)
        for sites in ((1,), (1, 2, 3), (2, 5)):
            assert exact_renyi2(partial_trace(a, sites)) == pytest.approx(exact_renyi2(partial_trace(b, sites)), abs=1e-10)


def test_config_validation():
    with pytest.raises(ValueError):
        QuenchConfig(1)
    with pytest.raises(ValueError):
        QuenchConfig(3, times=(2.0, 1.0))
    with pytest.raises(ValueError):
        QuenchConfig(3, disorder=(1.0, 2.0))
    with pytest.raises(ValueError):
        QuenchConfig(3, noise=NoiseParams(lambda_meas=(0.9, 0.9)))
    with pytest.raises(ValueError):
        NoiseParams(lambda_prep=(1.2,))


def test_config_hashable_for_caching():
    a = QuenchConfig(4, times=(0.0, 1e-3))
    b = QuenchConfig(4, times=[0.0, 1e-3])
    assert a == b and hash(a) == hash(b)
    assert build_hamiltonian(a) is build_hamiltonian(b)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 50), st.floats(0, 50), st.floats(0, 0.1))
def test_decay_model_matches_ode(p0, decay, flip, t):
    sol = solve_ivp(
        lambda _, p: -(decay + flip) * p + flip * (1 - p), (0.0, t), [p0], rtol=1e-12, atol=1e-14, method="DOP853"
    )
    assert excitation_decay_p(t, p0, decay, flip) == pytest.approx(sol.y[0, -1], abs=1e-9)


def test_decay_model_limits():
    assert excitation_decay_p(10.0, 0.3, 0.0, 0.0) == 0.3
    assert excitation_decay_p(1e6, 1.0, 2.0, 3.0) == pytest.approx(3.0 / 8.0)
    with pytest.raises(ValueError):
        excitation_decay_p(1.0, 0.5, -1.0, 0.0)


@pytest.mark.parametrize("t", [0.0, 0.01, 0.2])
def test_two_ion_distribution_by_enumeration(t):
    decay, flip = 3.0, 1.5
    p1 = excitation_decay_p(t, 1.0, decay, flip)
    p2 = excitation_decay_p(t, 0.0, decay, flip)
    want = np.zeros(3)
    for a in (0, 1):
        for b in (0, 1):
            want[a + b] += (p1 if a else 1 - p1) * (p2 if b else 1 - p2)
    assert np.allclose(excitation_number_dist(t, 2, 1, decay, flip), want, atol=1e-15)


def test_excitation_distribution_normalized():
    dist = excitation_number_dist(0.05, 10, 5, 2.0, 1.0)
    assert dist.sum() == pytest.approx(1.0)
    assert np.allclose(excitation_number_dist(0.0, 10, 5, 2.0, 1.0), np.eye(11)[5])


def test_disorder_range():
    d = draw_disorder(np.random.default_rng(0), 1000, 420.0, 3.0)
    assert min(d) >= -1260.0 and max(d) <= 1260.0
    assert min(d) < -1000 and max(d) > 1000
