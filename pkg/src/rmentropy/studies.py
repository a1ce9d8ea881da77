"""Experiment harnesses: measurement scaling, disorder averaging, diagnostics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, special, stats

from .dynamics import QuenchConfig, build_hamiltonian, draw_disorder, evolve
from .estimator import (
    DisorderAverage,
    MutualInformation,
    disorder_average,
    estimate_entropy,
    estimate_purity,
    mutual_information,
    x_from_counts,
)
from .qstate import QuantumState, exact_purity, partial_trace, random_pure_state
from .randunitary import DOMAIN_DISORDER, DOMAIN_SHOTS, DOMAIN_STUDY, cue_matrices, cue_matrix, decompose_zyz, rx, ry, substream
from .records import MeasurementRecord, group_records
from .sampler import NoiseModel, depolarize_probabilities, prepare_state, run_protocol, sample_counts

__all__ = [
    "STATE_FAMILIES",
    "default_grid",
    "fine_grid",
    "family_state",
    "ScalingPoint",
    "ScalingResult",
    "error_surface",
    "scaling_study",
    "DisorderStudyResult",
    "draw_patterns",
    "exact_disorder_purity",
    "disorder_study",
    "BasisFit",
    "DiagnosticsReport",
    "simulate_projection_records",
    "fit_box_limit",
    "uniformity_ks",
    "uniformity_diagnostics",
    "crosstalk_diagnostics",
]

STATE_FAMILIES = ("product_pure", "haar_pure", "half_haar_mixed")


# -- measurement scaling -------------------------------------------------


def default_grid(n: int = 12, lo: int = 4, hi: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """``N_U`` with quadratic spacing and ``N_M`` with logarithmic spacing."""
    n_u = np.unique(np.round(np.linspace(np.sqrt(lo), np.sqrt(hi), n) ** 2).astype(int))
    n_m = np.unique(np.round(np.geomspace(lo, hi, n)).astype(int))
    return n_u, n_m


def fine_grid() -> tuple[np.ndarray, np.ndarray]:
    return default_grid(50)


def family_state(family: str, n_a: int, rng: np.random.Generator) -> QuantumState:
    """Representative state of ``n_a`` qubits for a scaling family."""
    if family == "product_pure":
        vec = np.zeros(2**n_a, dtype=complex)
        vec[0] = 1.0
        return QuantumState(vec, n_a)
    if family == "haar_pure":
        return random_pure_state(n_a, rng)
    if family == "half_haar_mixed":
        return partial_trace(random_pure_state(2 * n_a, rng), range(1, n_a + 1))
    raise ValueError(f"unknown state family {family!r}; expected one of {STATE_FAMILIES}")


def _batched_probabilities(state: QuantumState, mats: np.ndarray) -> np.ndarray:
    """Outcome distributions for a batch of product unitaries ``(K, N, 2, 2)``."""
    k, n = mats.shape[:2]
    if state.kind == "pure":
        psi = np.broadcast_to(state.data.reshape((1,) + (2,) * n), (k,) + (2,) * n)
        for a in range(n):
            psi = np.moveaxis(np.einsum("kij,k...j->k...i", mats[:, a], np.moveaxis(psi, a + 1, -1)), -1, a + 1)
        return (np.abs(psi) ** 2).reshape(k, -1)
    full = np.ones((k, 1, 1), dtype=complex)
    for a in range(n):
        full = np.einsum("kij,kab->kiajb", full, mats[:, a]).reshape(k, full.shape[1] * 2, -1)
    probs = np.einsum("kij,jl,kil->ki", full, state.data, full.conj()).real
    return np.clip(probs, 0.0, None)


def error_surface(
    state: QuantumState,
    n_u: Sequence[int],
    n_m: Sequence[int],
    trials: int,
    seed: int,
    key: Sequence[int] = (),
) -> np.ndarray:
    """Mean relative purity error over ``trials`` simulated experiments.

    Returns an array of shape ``(len(n_u), len(n_m))``. Within one trial,
    the first ``N_U`` of a fixed list of unitaries serve every grid column,
    and shots are extended in place from one ``N_M`` column to the next.
    Every grid point still sees an exact ``(N_U, N_M)`` experiment, while
    neighbouring points share their noise.
    """
    exact = exact_purity(state)
    n_u = np.asarray(n_u)
    n_m = np.asarray(n_m)
    err = np.zeros((trials, len(n_u), len(n_m)))
    for trial in range(trials):
        rng = substream(seed, DOMAIN_STUDY, *key, trial)
        mats = cue_matrices(rng, int(n_u.max()) * state.n_qubits).reshape(-1, state.n_qubits, 2, 2)
        probs = _batched_probabilities(state, mats)
        probs /= probs.sum(axis=1, keepdims=True)
        counts = np.zeros(probs.shape, dtype=np.int64)
        drawn = 0
        for j, m in enumerate(n_m):
            counts += rng.multinomial(int(m) - drawn, probs)
            drawn = int(m)
            x = x_from_counts(counts)
            means = np.cumsum(x)[n_u - 1] / n_u
            err[trial, :, j] = np.abs(means - exact) / exact
    return err.mean(axis=0)


@dataclass
class ScalingPoint:
    n_a: int
    exact_purity: float
    n_unitaries: int | None
    n_shots: int | None
    total: int | None
    log2_uncertainty: float | None
    mean_error: float | None

    @property
    def ratio(self) -> float | None:
        return None if self.total is None else self.n_unitaries / self.n_shots


@dataclass
class ScalingResult:
    family: str
    points: list[ScalingPoint]
    exponent: float | None = None
    offset: float | None = None
    exponent_err: float | None = None
    offset_err: float | None = None
    surfaces: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    grid: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def unmet(self) -> list[int]:
        """Subsystem sizes where no grid point reached the error target."""
        return [p.n_a for p in self.points if p.total is None]


def _grid_step(values: np.ndarray, idx: int) -> float:
    logs = np.log2(values)
    if len(logs) < 2:
        return 0.0
    lo = logs[idx] - logs[idx - 1] if idx > 0 else logs[1] - logs[0]
    hi = logs[idx + 1] - logs[idx] if idx + 1 < len(logs) else logs[-1] - logs[-2]
    return 0.5 * max(lo, hi)


def scaling_study(
    family: str,
    n_a_values: Sequence[int],
    error_target: float = 0.12,
    trials: int = 30,
    grid: tuple[Sequence[int], Sequence[int]] | None = None,
    seed: int = 0,
    threads: int = 1,
) -> ScalingResult:
    """Smallest ``N_U * N_M`` reaching ``error_target`` for each subsystem size.

    The exponent ``a`` and offset ``b`` of ``total ~ 2^(b + a N_A)`` come
    from an unweighted least-squares fit of ``log2(total)``; their errors
    propagate the grid resolution at each optimum.
    """
    if family not in STATE_FAMILIES:
        raise ValueError(f"unknown state family {family!r}")
    n_u, n_m = (np.asarray(g) for g in (grid or default_grid()))
    fam_id = STATE_FAMILIES.index(family)

    def one(n_a):
        rng = substream(seed, DOMAIN_STUDY, fam_id, n_a, 2**31)
        state = family_state(family, n_a, rng)
        return n_a, state, error_surface(state, n_u, n_m, trials, seed, (fam_id, n_a))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(one, n_a_values))
    else:
        done = [one(n_a) for n_a in n_a_values]

    result = ScalingResult(family, [], grid=(n_u, n_m))
    for n_a, state, surface in sorted(done, key=lambda r: r[0]):
        result.surfaces[n_a] = surface
        totals = n_u[:, None] * n_m[None, :]
        ok = surface <= error_target
        if not ok.any():
            result.points.append(ScalingPoint(n_a, exact_purity(state), None, None, None, None, None))
            continue
        cand = np.where(ok, totals, np.iinfo(np.int64).max)
        i, j = np.unravel_index(np.argmin(cand), cand.shape)
        unc = float(np.hypot(_grid_step(n_u, i), _grid_step(n_m, j)))
        result.points.append(
            ScalingPoint(n_a, exact_purity(state), int(n_u[i]), int(n_m[j]), int(totals[i, j]), unc, float(surface[i, j]))
        )

    met = [p for p in result.points if p.total is not None]
    if len(met) >= 2:
        x = np.array([p.n_a for p in met], dtype=float)
        y = np.log2([p.total for p in met])
        sig = np.array([p.log2_uncertainty for p in met])
        a, b = np.polyfit(x, y, 1)
        sxx = np.sum((x - x.mean()) ** 2)
        wa = (x - x.mean()) / sxx
        wb = 1.0 / len(x) - x.mean() * wa
        result.exponent, result.offset = float(a), float(b)
        result.exponent_err = float(np.sqrt(np.sum((wa * sig) ** 2)))
        result.offset_err = float(np.sqrt(np.sum((wb * sig) ** 2)))
    return result


# -- disorder ------------------------------------------------------------


def draw_patterns(config: QuenchConfig, n_patterns: int, strength: float = 3.0) -> list[tuple[float, ...]]:
    """Disorder patterns uniform in ``[-strength J0, strength J0]``, seeded per pattern."""
    return [
        draw_disorder(substream(config.master_seed, DOMAIN_DISORDER, p), config.n_qubits, config.j0, strength)
        for p in range(n_patterns)
    ]


def exact_disorder_purity(config: QuenchConfig, patterns, t: float, sites: Sequence[int]) -> np.ndarray:
    """Exact subsystem purity per pattern at time ``t`` (noise as in ``config``)."""
    out = []
    for dis in patterns:
        cfg = replace(config, disorder=None if dis is None else tuple(dis))
        state = evolve(prepare_state(cfg), build_hamiltonian(cfg), t)
        reduced = partial_trace(state, sites)
        meas = cfg.noise.lambda_meas
        if meas is not None and any(lam != 1.0 for lam in meas):
            from .qstate import depolarize_all

            reduced = depolarize_all(reduced, [meas[s - 1] for s in sorted(sites)])
        out.append(exact_purity(reduced))
    return np.array(out)


@dataclass
class DisorderStudyResult:
    sites: tuple[int, ...]
    times: tuple[float, ...]
    patterns: list
    averaged: list[DisorderAverage]
    clean: list
    mutual_info: dict = field(default_factory=dict)
    records: list[MeasurementRecord] = field(default_factory=list, repr=False)
    clean_records: list[MeasurementRecord] = field(default_factory=list, repr=False)

    def rows(self) -> list[dict]:
        """Plot-ready series, one row per time."""
        out = []
        for t, avg, cl in zip(self.times, self.averaged, self.clean):
            out.append(
                {
                    "time": t,
                    "s2_disorder": avg.s2_of_average,
                    "stderr_disorder": avg.stderr_s2,
                    "mean_pattern_s2": avg.mean_of_entropies,
                    "s2_clean": cl.s2,
                    "stderr_clean": cl.stderr_s2,
                }
            )
        return out


def disorder_study(
    config: QuenchConfig,
    n_patterns: int,
    n_unitaries_per_pattern: int,
    times: Sequence[float] | None = None,
    n_shots: int = 150,
    strength: float = 3.0,
    sites: Sequence[int] | None = None,
    mi_pairs: Sequence[tuple[Sequence[int], Sequence[int]]] = (),
    clean_unitaries: int | None = None,
    threads: int = 1,
) -> DisorderStudyResult:
    """Disorder-averaged entropy growth next to the clean quench.

    The clean baseline uses the same total number of unitaries
    (``n_patterns * n_unitaries_per_pattern``) unless ``clean_unitaries``
    is given. ``sites`` defaults to the left half of the chain.
    """
    if n_patterns < 1:
        raise ValueError("need at least one disorder pattern")
    if times is not None:
        config = replace(config, times=tuple(times))
    sites = tuple(range(1, config.n_qubits // 2 + 1)) if sites is None else tuple(sites)
    patterns = draw_patterns(config, n_patterns, strength)
    run = run_protocol(config, n_unitaries_per_pattern, n_shots, patterns=patterns, threads=threads)
    clean_cfg = replace(config, disorder=None, master_seed=config.master_seed + 1)
    clean_n = clean_unitaries or n_patterns * n_unitaries_per_pattern
    clean = run_protocol(clean_cfg, clean_n, n_shots, threads=threads)

    by_time: dict[float, dict[int, list]] = {}
    for (t, p), recs in group_records(run.records).items():
        by_time.setdefault(t, {})[p] = recs
    clean_groups = group_records(clean.records)

    result = DisorderStudyResult(sites, config.times, patterns, [], [], records=run.records, clean_records=clean.records)
    for t in config.times:
        groups = by_time[t]
        ests = [estimate_purity(groups[p], sites) for p in sorted(groups)]
        result.averaged.append(disorder_average(ests))
        result.clean.append(estimate_entropy(estimate_purity(clean_groups[(t, 0)], sites)))
        pooled = [r for p in sorted(groups) for r in groups[p]]
        for a, b in mi_pairs:
            mi = mutual_information(pooled, a, b)
            result.mutual_info.setdefault((tuple(a), tuple(b)), []).append(mi)
    return result


# -- diagnostics ---------------------------------------------------------

_BASIS_CHANGE = {"z": np.eye(2, dtype=complex), "x": ry(-np.pi / 2), "y": rx(np.pi / 2)}


def simulate_projection_records(
    n_qubits: int,
    n_unitaries: int,
    n_shots: int,
    seed: int,
    basis: str = "z",
    lambda_meas: float | Sequence[float] = 1.0,
    state: QuantumState | None = None,
) -> list[MeasurementRecord]:
    """Random single-qubit rotations on a product state, read out along ``basis``.

    The default state has every qubit in the ground state. The stored
    angles describe the full applied rotation (random unitary followed by
    the basis change).
    """
    if basis not in _BASIS_CHANGE:
        raise ValueError(f"basis must be one of {sorted(_BASIS_CHANGE)}")
    if state is None:
        vec = np.zeros(2**n_qubits, dtype=complex)
        vec[0] = 1.0
        state = QuantumState(vec, n_qubits)
    lam = (float(lambda_meas),) * n_qubits if np.isscalar(lambda_meas) else tuple(lambda_meas)
    b_id = "zxy".index(basis)
    change = _BASIS_CHANGE[basis]
    from .sampler import outcome_probabilities

    out = []
    for u_idx in range(n_unitaries):
        mats = np.stack(
            [change @ cue_matrix(substream(seed, DOMAIN_STUDY, 7, b_id, u_idx, q)) for q in range(n_qubits)]
        )
        probs = outcome_probabilities(state, mats, meas_lambdas=lam)
        counts = sample_counts(substream(seed, DOMAIN_SHOTS, 7, b_id, u_idx), n_shots, probs)
        out.append(
            MeasurementRecord(
                n_qubits=n_qubits,
                unitary_index=u_idx,
                angles=tuple(decompose_zyz(m) for m in mats),
                counts={format(int(i), f"0{n_qubits}b"): int(counts[i]) for i in np.flatnonzero(counts)},
                n_shots=n_shots,
            )
        )
    return out


def _excitations(records: Sequence[MeasurementRecord]) -> np.ndarray:
    """Per-record, per-qubit number of up outcomes, shape ``(n_records, N)``."""
    rows = []
    for rec in records:
        bits, cnt = rec.outcome_bits()
        rows.append(cnt @ bits)
    return np.array(rows, dtype=np.int64)


def _box_pmf(p_lim: float, n_shots: int) -> np.ndarray:
    m = np.arange(n_shots + 1)
    if p_lim <= 0:
        return np.full(n_shots + 1, 1.0 / (n_shots + 1))
    hi = special.betainc(m + 1, n_shots - m + 1, 1.0 - p_lim)
    lo = special.betainc(m + 1, n_shots - m + 1, p_lim)
    return np.clip(hi - lo, 1e-300, None) / ((n_shots + 1) * (1.0 - 2.0 * p_lim))


@dataclass
class BasisFit:
    basis: str
    p_lim: float
    ci: tuple[float, float]
    gamma: float
    chi2: float
    dof: int
    chi2_band: tuple[float, float]
    n_samples: int
    ks_statistic: float | None = None
    ks_pvalue: float | None = None

    @property
    def chi2_ok(self) -> bool:
        return self.chi2_band[0] <= self.chi2 <= self.chi2_band[1]


def fit_box_limit(histogram: np.ndarray, n_shots: int, basis: str = "z", level: float = 0.99) -> BasisFit:
    """Maximum-likelihood ``p_lim`` of a box distribution seen through binomial noise.

    ``histogram[m]`` counts how often ``m`` of ``n_shots`` outcomes were up.
    The confidence interval is the likelihood-ratio interval at 95%; the
    Pearson chi-square uses all ``n_shots + 1`` bins and ``n_shots - 1``
    degrees of freedom, with its two-sided ``level`` band.
    """
    h = np.asarray(histogram, dtype=float)
    total = h.sum()

    def nll(p):
        return -np.sum(h * np.log(_box_pmf(p, n_shots)))

    upper = 0.25
    res = optimize.minimize_scalar(nll, bounds=(0.0, upper), method="bounded", options={"xatol": 1e-7})
    p_hat = float(res.x)
    if nll(0.0) <= res.fun:
        p_hat = 0.0
    best = nll(p_hat)
    crit = stats.chi2.ppf(0.95, 1) / 2
    g = lambda p: nll(p) - best - crit  # noqa: E731
    lo = 0.0 if p_hat == 0.0 or g(0.0) <= 0 else optimize.brentq(g, 0.0, p_hat)
    hi = optimize.brentq(g, p_hat, upper) if g(upper) > 0 else upper
    expected = total * _box_pmf(p_hat, n_shots)
    chi2 = float(np.sum((h - expected) ** 2 / expected))
    dof = n_shots - 1
    band = (float(stats.chi2.ppf((1 - level) / 2, dof)), float(stats.chi2.ppf((1 + level) / 2, dof)))
    return BasisFit(basis, p_hat, (float(lo), float(hi)), 2 * p_hat, chi2, dof, band, int(total))


def uniformity_ks(records: Sequence[MeasurementRecord], state: QuantumState | None = None) -> tuple[float, float]:
    """Kolmogorov-Smirnov test of exact up-probabilities against their ideal box.

    Probabilities are recomputed from each record's unitaries for the known
    product ``state`` (default: all qubits down). For a qubit with Bloch
    length ``r`` the ideal law is uniform on ``[(1 - r)/2, (1 + r)/2]``.
    """
    n = records[0].n_qubits
    if state is None:
        vec = np.zeros(2**n, dtype=complex)
        vec[0] = 1.0
        state = QuantumState(vec, n)
    singles = [partial_trace(state, [q]).data for q in range(1, n + 1)]
    vals, lows, widths = [], [], []
    for rec in records:
        for q, u in enumerate(rec.unitary_matrices()):
            rho = singles[q]
            vals.append(float(np.real(u @ rho @ u.conj().T)[1, 1]))
    for rho in singles:
        r = float(np.sqrt(max(0.0, 2 * np.sum(np.abs(rho) ** 2) - 1)))
        lows.append((1 - r) / 2)
        widths.append(r)
    vals = np.array(vals).reshape(len(records), n)
    lo, wd = np.array(lows), np.array(widths)
    scaled = ((vals - lo) / np.where(wd > 0, wd, 1.0)).reshape(-1)
    res = stats.kstest(scaled, "uniform")
    return float(res.statistic), float(res.pvalue)


@dataclass
class DiagnosticsReport:
    fits: dict[str, BasisFit] = field(default_factory=dict)
    pearson: dict[str, np.ndarray] = field(default_factory=dict)
    pvalues: dict[str, np.ndarray] = field(default_factory=dict)
    fisher_chi2: float | None = None
    fisher_pairs: int = 0
    fisher_band: tuple[float, float] | None = None
    excluded: list = field(default_factory=list)

    @property
    def gamma(self) -> float | None:
        if not self.fits:
            return None
        return float(np.mean([f.gamma for f in self.fits.values()]))

    @property
    def fisher_ok(self) -> bool | None:
        if self.fisher_chi2 is None:
            return None
        return self.fisher_band[0] <= self.fisher_chi2 <= self.fisher_band[1]


def uniformity_diagnostics(
    records_by_basis: Mapping[str, Sequence[MeasurementRecord]],
    state: QuantumState | None = None,
    report: DiagnosticsReport | None = None,
) -> DiagnosticsReport:
    """Fit the box limit ``p_lim`` per basis from pooled single-qubit histograms."""
    report = report or DiagnosticsReport()
    for basis, records in records_by_basis.items():
        records = list(records)
        if len(records) < 300:
            raise ValueError(f"basis {basis}: need at least 300 unitaries, got {len(records)}")
        shots = {r.n_shots for r in records}
        if len(shots) != 1:
            raise ValueError(f"basis {basis}: records disagree on n_shots")
        n_shots = shots.pop()
        exc = _excitations(records).reshape(-1)
        hist = np.bincount(exc, minlength=n_shots + 1)
        fit = fit_box_limit(hist, n_shots, basis)
        if basis == "z" or state is not None:
            fit.ks_statistic, fit.ks_pvalue = uniformity_ks(records, state)
        report.fits[basis] = fit
    return report


def crosstalk_diagnostics(
    records_by_basis: Mapping[str, Sequence[MeasurementRecord]],
    level: float = 0.99,
    report: DiagnosticsReport | None = None,
) -> DiagnosticsReport:
    """Pairwise Pearson correlations of per-unitary excitation probabilities.

    P-values use the exact null law of the sample correlation for
    bivariate normal data (equivalent to a two-sided t-test); Fisher's
    ``-2 sum log p`` over all usable pairs is compared with the
    ``chi2(2M)`` band at ``level``. Pairs involving a constant series are
    excluded and listed.
    """
    report = report or DiagnosticsReport()
    logs = []
    for basis, records in records_by_basis.items():
        records = list(records)
        n = records[0].n_qubits
        if n < 2:
            raise ValueError("cross-talk needs at least two qubits")
        if len(records) < 100:
            raise ValueError(f"basis {basis}: need at least 100 unitaries, got {len(records)}")
        probs = _excitations(records) / records[0].n_shots
        c = np.full((n, n), np.nan)
        pv = np.full((n, n), np.nan)
        np.fill_diagonal(c, 1.0)
        for i in range(n):
            for j in range(i + 1, n):
                if np.ptp(probs[:, i]) == 0 or np.ptp(probs[:, j]) == 0:
                    report.excluded.append((basis, i + 1, j + 1))
                    continue
                r = stats.pearsonr(probs[:, i], probs[:, j])
                c[i, j] = c[j, i] = r.statistic
                pv[i, j] = pv[j, i] = r.pvalue
                logs.append(np.log(max(r.pvalue, 1e-300)))
        report.pearson[basis] = c
        report.pvalues[basis] = pv
    if logs:
        m = len(logs)
        report.fisher_chi2 = float(-2.0 * np.sum(logs))
        report.fisher_pairs = m
        report.fisher_band = (
            float(stats.chi2.ppf((1 - level) / 2, 2 * m)),
            float(stats.chi2.ppf((1 + level) / 2, 2 * m)),
        )
    return report
