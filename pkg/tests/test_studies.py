import numpy as np
import pytest
from scipy import stats

from rmentropy.dynamics import QuenchConfig
from rmentropy.estimator import estimate_purity
from rmentropy.qstate import exact_purity
from rmentropy.randunitary import cue_matrices, substream
from rmentropy.records import MeasurementRecord, group_records
from rmentropy.sampler import outcome_probabilities
from rmentropy.studies import (
    STATE_FAMILIES,
    _batched_probabilities,
    _box_pmf,
    crosstalk_diagnostics,
    default_grid,
    disorder_study,
    error_surface,
    exact_disorder_purity,
    family_state,
    fit_box_limit,
    fine_grid,
    scaling_study,
    simulate_projection_records,
    uniformity_diagnostics,
)

J0 = 420.0


def test_grids():
    n_u, n_m = default_grid()
    assert len(n_u) == 12 and len(n_m) == 12
    assert (n_u[0], n_u[-1], n_m[0], n_m[-1]) == (4, 1024, 4, 1024)
    # quadratic and logarithmic spacing
    assert np.allclose(np.diff(np.sqrt(n_u)), np.diff(np.sqrt(n_u))[0], rtol=0.05)
    assert np.allclose(np.diff(np.log(n_m)), np.log(256) / 11, rtol=0.3)
    assert len(fine_grid()[0]) == 50


def test_family_states():
    rng = substream(0, 1)
    assert exact_purity(family_state("product_pure", 3, rng)) == pytest.approx(1.0)
    assert exact_purity(family_state("haar_pure", 3, rng)) == pytest.approx(1.0)
    mixed = family_state("half_haar_mixed", 3, rng)
    assert mixed.kind == "mixed" and exact_purity(mixed) < 0.6
    with pytest.raises(ValueError):
        family_state("nope", 2, rng)


@pytest.mark.parametrize("family", STATE_FAMILIES)
def test_batched_probabilities_match_sampler(family):
    rng = substream(0, 2)
    state = family_state(family, 3, rng)
    mats = cue_matrices(rng, 12).reshape(4, 3, 2, 2)
    got = _batched_probabilities(state, mats)
    for k in range(4):
        assert np.allclose(got[k], outcome_probabilities(state, mats[k]), atol=1e-12)


@pytest.mark.parametrize("family", STATE_FAMILIES)
def test_error_surface_decreases_along_both_axes(family):
    n_u, n_m = default_grid()
    state = family_state(family, 3, substream(0, 5))
    s = error_surface(state, n_u, n_m, trials=10, seed=3)
    for j in range(len(n_m)):
        assert stats.spearmanr(np.arange(len(n_u)), s[:, j]).statistic < 0
    for i in range(len(n_u)):
        assert stats.spearmanr(np.arange(len(n_m)), s[i, :]).statistic < 0


def test_scaling_study_is_reproducible():
    a = scaling_study("haar_pure", [2, 3], trials=5, seed=8)
    b = scaling_study("haar_pure", [2, 3], trials=5, seed=8)
    assert [vars(p) for p in a.points] == [vars(p) for p in b.points]
    assert a.exponent == b.exponent
    for k in a.surfaces:
        assert np.array_equal(a.surfaces[k], b.surfaces[k])
    threaded = scaling_study("haar_pure", [2, 3], trials=5, seed=8, threads=2)
    assert [vars(p) for p in threaded.points] == [vars(p) for p in a.points]


def test_scaling_points_are_consistent():
    res = scaling_study("product_pure", [2, 3], trials=5, seed=1)
    for p in res.points:
        assert p.total == p.n_unitaries * p.n_shots
        assert p.mean_error <= 0.12
        assert p.log2_uncertainty > 0
    assert res.exponent is not None and res.exponent_err > 0


def test_unreachable_target_is_reported():
    res = scaling_study("product_pure", [2, 3], error_target=1e-6, trials=2, seed=1)
    assert res.unmet == [2, 3]
    assert res.exponent is None
    with pytest.raises(ValueError):
        scaling_study("bogus", [2])


def test_single_pattern_disorder_study_is_plain_quench():
    cfg = QuenchConfig(6, times=(2 / J0,), master_seed=4)
    res = disorder_study(cfg, 1, 30, n_shots=60)
    recs = group_records(res.records)[(2 / J0, 0)]
    plain = estimate_purity(recs, res.sites)
    assert res.averaged[0].purity == plain.purity
    assert res.averaged[0].stderr == plain.stderr


def test_zero_disorder_matches_clean_baseline():
    cfg = QuenchConfig(6, times=(2 / J0,), master_seed=6)
    res = disorder_study(cfg, 3, 40, n_shots=100, strength=0.0)
    avg, clean = res.averaged[0], res.clean[0]
    assert abs(avg.s2_of_average - clean.s2) < 3 * np.hypot(avg.stderr_s2, clean.stderr_s2)
    assert np.allclose(exact_disorder_purity(cfg, res.patterns, 2 / J0, res.sites), exact_disorder_purity(cfg, [None], 2 / J0, res.sites))


def test_disorder_mutual_information_falls_with_distance():
    cfg = QuenchConfig(8, times=(2 / J0,), master_seed=12)
    pairs = [((1,), (j,)) for j in (2, 4, 6)]
    res = disorder_study(cfg, 20, 10, n_shots=150, mi_pairs=pairs)
    values = np.array([res.mutual_info[(a, b)][0].value for a, b in pairs])
    slope = stats.linregress([1, 3, 5], values).slope
    assert slope < 0
    assert values[0] > values[-1]
    rows = res.rows()
    assert set(rows[0]) >= {"time", "s2_disorder", "s2_clean"}


def test_box_pmf_normalized_and_matches_monte_carlo():
    n, p = 30, 0.05
    pmf = _box_pmf(p, n)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(_box_pmf(0.0, n), 1 / (n + 1))
    rng = np.random.default_rng(0)
    draws = rng.binomial(n, rng.uniform(p, 1 - p, 400_000))
    emp = np.bincount(draws, minlength=n + 1) / len(draws)
    assert np.allclose(emp, pmf, atol=3e-3)


def test_box_fit_recovers_parameter_from_expected_histogram():
    n = 150
    for p in (0.0, 0.01, 0.05):
        hist = 1e6 * _box_pmf(p, n)
        fit = fit_box_limit(hist, n)
        assert fit.p_lim == pytest.approx(p, abs=2e-4)
        assert fit.ci[0] <= p <= fit.ci[1]
        assert fit.chi2 == pytest.approx(0.0, abs=1e-3)


def test_noiseless_projection_records_give_zero_limit():
    recs = {"z": simulate_projection_records(2, 400, 150, seed=1)}
    rep = uniformity_diagnostics(recs)
    fit = rep.fits["z"]
    assert fit.ci[0] == 0.0 and fit.p_lim < 0.01
    assert fit.chi2_ok
    assert fit.ks_pvalue > 0.001


def test_noisy_projection_records_recover_gamma():
    lam = 1 - 0.04
    recs = {b: simulate_projection_records(4, 400, 150, seed=2, basis=b, lambda_meas=lam) for b in "xz"}
    rep = uniformity_diagnostics(recs)
    for fit in rep.fits.values():
        assert fit.ci[0] <= 0.02 <= fit.ci[1]
    assert rep.gamma == pytest.approx(0.04, rel=0.3)


def test_basis_records_store_the_applied_rotation():
    rec = simulate_projection_records(1, 1, 4, seed=0, basis="x")[0]
    plain = simulate_projection_records(1, 1, 4, seed=0, basis="z")[0]
    assert rec.angles != plain.angles


def test_diagnostics_need_enough_unitaries():
    recs = simulate_projection_records(2, 50, 20, seed=0)
    with pytest.raises(ValueError):
        uniformity_diagnostics({"z": recs})
    with pytest.raises(ValueError):
        crosstalk_diagnostics({"z": recs})


def test_independent_qubits_pass_fisher_test():
    recs = {"z": simulate_projection_records(5, 300, 100, seed=3)}
    rep = crosstalk_diagnostics(recs)
    assert rep.fisher_pairs == 10
    assert rep.fisher_ok
    c = rep.pearson["z"]
    assert np.all(np.abs(c[np.isfinite(c)]) <= 1.0)


def duplicate_first_qubit(rec, n):
    counts = {}
    for bits, c in rec.counts.items():
        key = bits[0] + bits[0] + bits[2:]
        counts[key] = counts.get(key, 0) + c
    return MeasurementRecord(n, rec.unitary_index, rec.angles, counts, rec.n_shots)


def test_duplicated_qubit_columns_detected():
    recs = [duplicate_first_qubit(r, 3) for r in simulate_projection_records(3, 150, 50, seed=4)]
    rep = crosstalk_diagnostics({"z": recs})
    assert rep.pearson["z"][0, 1] == pytest.approx(1.0)
    assert not rep.fisher_ok


def test_constant_series_excluded():
    base = simulate_projection_records(2, 120, 20, seed=5)
    recs = [MeasurementRecord(2, r.unitary_index, r.angles, _pin_first(r), r.n_shots) for r in base]
    rep = crosstalk_diagnostics({"z": recs})
    assert rep.excluded == [("z", 1, 2)]
    assert rep.fisher_chi2 is None


def _pin_first(rec):
    out = {}
    for bits, c in rec.counts.items():
        key = "0" + bits[1:]
        out[key] = out.get(key, 0) + c
    return out
