"""Command-line interface.

Commands: ``simulate``, ``estimate``, ``scaling``, ``disorder``, ``diagnose``.
Exit codes: 0 success, 2 configuration or usage error, 3 I/O failure,
4 bad input data.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .dynamics import NoiseParams, QuenchConfig
from .estimator import (
    InconsistentRecordsError,
    RecordBatch,
    all_masks,
    connected_partitions,
    estimate_entropy,
    estimate_purity,
)
from .records import RecordFormatError, format_float, group_records, read_records, write_records
from .sampler import calibrate_prep_lambda, run_protocol
from .studies import (
    STATE_FAMILIES,
    crosstalk_diagnostics,
    default_grid,
    disorder_study,
    fine_grid,
    scaling_study,
    simulate_projection_records,
    uniformity_diagnostics,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DATA = 0, 2, 3, 4

RESULT_COLUMNS = ("experiment", "time", "pattern", "sites", "n_a", "purity", "stderr", "s2", "stderr_s2", "flag")


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------

_QUENCH_KEYS = {"n_qubits", "j0", "alpha", "b_field", "disorder", "times", "noise"}
_NOISE_KEYS = {"lambda_prep", "lambda_meas", "prep_purity", "decay_rate", "flip_rate"}
_COMMAND_KEYS = {
    "simulate": _QUENCH_KEYS | {"seed", "n_unitaries", "n_shots", "concatenate"},
    "estimate": {"masks", "experiment"},
    "scaling": {"seed", "family", "n_a", "error_target", "trials", "grid"},
    "disorder": _QUENCH_KEYS
    | {"seed", "n_patterns", "n_unitaries", "n_shots", "strength", "sites", "mi_pairs", "clean_unitaries"},
    "diagnose": {"seed", "n_qubits", "n_unitaries", "n_shots", "lambda_meas", "bases", "basis"},
}


def load_config(path: str | None, command: str) -> dict[str, Any]:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(cfg) - _COMMAND_KEYS[command]
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    if isinstance(cfg.get("noise"), dict):
        bad = set(cfg["noise"]) - _NOISE_KEYS
        if bad:
            raise ConfigError(f"unknown noise keys: {sorted(bad)}")
    return cfg


def _per_qubit(value, n: int, name: str):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return (float(value),) * n
    if isinstance(value, list) and len(value) == n:
        return tuple(float(v) for v in value)
    raise ConfigError(f"{name} must be a number or a list of {n} numbers")


def quench_from_config(cfg: dict, seed: int) -> QuenchConfig:
    if "n_qubits" not in cfg:
        raise ConfigError("config needs n_qubits")
    n = cfg["n_qubits"]
    if not isinstance(n, int) or not 2 <= n <= 14:
        raise ConfigError("n_qubits must be an integer in [2, 14]")
    noise_cfg = cfg.get("noise") or {}
    if not isinstance(noise_cfg, dict):
        raise ConfigError("noise must be an object")
    prep = _per_qubit(noise_cfg.get("lambda_prep"), n, "noise.lambda_prep")
    if "prep_purity" in noise_cfg:
        if prep is not None:
            raise ConfigError("give either noise.lambda_prep or noise.prep_purity, not both")
        prep = (calibrate_prep_lambda(n, float(noise_cfg["prep_purity"])),) * n
    meas = _per_qubit(noise_cfg.get("lambda_meas"), n, "noise.lambda_meas")
    mixed = any(x != 1.0 for x in (prep or ()) + (meas or ()))
    if mixed and n > 10:
        raise ConfigError("noisy simulations are limited to 10 qubits")
    try:
        noise = NoiseParams(prep, meas, float(noise_cfg.get("decay_rate", 0.0)), float(noise_cfg.get("flip_rate", 0.0)))
        return QuenchConfig(
            n_qubits=n,
            j0=float(cfg.get("j0", 420.0)),
            alpha=float(cfg.get("alpha", 1.24)),
            b_field=float(cfg.get("b_field", 0.0)),
            disorder=cfg.get("disorder"),
            times=tuple(cfg.get("times", (0.0,))),
            noise=noise,
            master_seed=seed,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _positive_int(cfg: dict, key: str, default: int | None = None, minimum: int = 1) -> int:
    val = cfg.get(key, default)
    if val is None:
        raise ConfigError(f"config needs {key}")
    if not isinstance(val, int) or val < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}")
    return val


def resolve_seed(args, cfg: dict) -> int:
    """``--seed`` wins over the config; without either, draw one and print it."""
    if args.seed is not None:
        return args.seed
    if "seed" in cfg:
        seed = cfg["seed"]
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        return seed
    seed = int(np.random.SeedSequence().entropy % 2**64)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def parse_masks(spec: str, n_qubits: int) -> list[tuple[int, ...]]:
    """``all``, ``connected-from-1`` or explicit lists such as ``1,2;3``."""
    spec = spec.strip()
    if not spec:
        raise ConfigError("empty mask specification")
    if spec == "all":
        return all_masks(n_qubits)
    if spec == "connected-from-1":
        return connected_partitions(n_qubits)
    masks = []
    for part in spec.split(";"):
        try:
            sites = tuple(sorted({int(s) for s in part.split(",") if s.strip()}))
        except ValueError:
            raise ConfigError(f"bad mask {part!r}") from None
        if not sites or sites[0] < 1 or sites[-1] > n_qubits:
            raise ConfigError(f"mask {part!r} must list sites in 1..{n_qubits}")
        masks.append(sites)
    return masks


# -- output --------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def write_table(path: Path, columns: Sequence[str], rows, meta: dict, plot: str | None = None) -> None:
    """Tab-separated table with a ``#`` comment block of provenance."""
    lines = [f"# {k}: {json.dumps(v, sort_keys=True)}" for k, v in meta.items()]
    if plot:
        lines.append(f"# plot: {plot}")
    lines.append("\t".join(columns))
    lines.extend("\t".join(_fmt(row[c]) for c in columns) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path: Path, obj: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _provenance(command: str, seed: int | None, cfg: dict, **extra) -> dict:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    out = {"tool": "rmentropy", "tool_version": __version__, "command": command, "config_sha256": hashlib.sha256(text.encode()).hexdigest()}
    if seed is not None:
        out["seed"] = seed
    out.update(extra)
    return out


def result_rows(records, masks_spec: str, experiment: str) -> list[dict]:
    rows = []
    for (t, pattern), recs in group_records(records).items():
        batch = RecordBatch(recs)
        for mask in parse_masks(masks_spec, batch.n_qubits):
            ent = estimate_entropy(estimate_purity(batch, mask))
            rows.append(
                {
                    "experiment": experiment,
                    "time": t,
                    "pattern": pattern,
                    "sites": mask,
                    "n_a": len(mask),
                    "purity": ent.purity,
                    "stderr": ent.stderr,
                    "s2": ent.s2,
                    "stderr_s2": ent.stderr_s2,
                    "flag": ent.flag,
                }
            )
    return rows


# -- commands ------------------------------------------------------------


def cmd_simulate(args, cfg: dict) -> int:
    seed = resolve_seed(args, cfg)
    config = quench_from_config(cfg, seed)
    n_u = _positive_int(cfg, "n_unitaries", minimum=2)
    n_m = _positive_int(cfg, "n_shots", minimum=2)
    run = run_protocol(config, n_u, n_m, threads=args.threads, concatenate=bool(cfg.get("concatenate", False)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(run.records, out / "records.jsonl")
    prov = dict(run.provenance, command="simulate")
    _write_json(out / "provenance.json", prov)
    return EXIT_OK


def cmd_estimate(args, cfg: dict) -> int:
    if not args.records:
        raise ConfigError("estimate needs --records")
    masks = args.masks if args.masks is not None else cfg.get("masks", "connected-from-1")
    if not str(masks).strip():
        raise ConfigError("empty mask specification")
    path = Path(args.records)
    experiment = cfg.get("experiment", path.stem)
    data = path.read_bytes()
    records = read_records(path)
    if not records:
        raise RecordFormatError("no records found")
    rows = result_rows(records, masks, experiment)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = _provenance("estimate", None, cfg, records=path.name, records_sha256=hashlib.sha256(data).hexdigest(), masks=masks)
    write_table(out / "results.tsv", RESULT_COLUMNS, rows, meta, "x=time y=s2 err=stderr_s2 series=sites")
    if args.histogram:
        hist_rows = []
        for (t, pattern), recs in group_records(records).items():
            batch = RecordBatch(recs)
            full = tuple(range(1, batch.n_qubits + 1))
            for i, x in enumerate(batch.x_values(full)):
                hist_rows.append({"time": t, "pattern": pattern, "unitary_index": recs[i].unitary_index, "x": float(x)})
        write_table(
            out / "x_values.tsv", ("time", "pattern", "unitary_index", "x"), hist_rows, meta, "histogram of x per time"
        )
    return EXIT_OK


def cmd_scaling(args, cfg: dict) -> int:
    seed = resolve_seed(args, cfg)
    family = cfg.get("family", "product_pure")
    if family not in STATE_FAMILIES:
        raise ConfigError(f"family must be one of {STATE_FAMILIES}")
    n_a = cfg.get("n_a", [2, 3, 4, 5])
    if not isinstance(n_a, list) or not n_a or any(not isinstance(k, int) or not 1 <= k <= 6 for k in n_a):
        raise ConfigError("n_a must be a non-empty list of integers in [1, 6]")
    grid_name = cfg.get("grid", "desk")
    if grid_name not in ("desk", "fine"):
        raise ConfigError("grid must be 'desk' or 'fine'")
    trials = _positive_int(cfg, "trials", 30 if grid_name == "desk" else 100)
    target = float(cfg.get("error_target", 0.12))
    grid = default_grid() if grid_name == "desk" else fine_grid()
    res = scaling_study(family, n_a, target, trials, grid, seed, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = _provenance(
        "scaling",
        seed,
        cfg,
        family=family,
        trials=trials,
        error_target=target,
        exponent=res.exponent,
        exponent_err=res.exponent_err,
        offset=res.offset,
        offset_err=res.offset_err,
        unmet=res.unmet,
    )
    cols = ("n_a", "exact_purity", "n_unitaries", "n_shots", "total", "log2_uncertainty", "mean_error", "ratio")
    rows = [{c: getattr(p, c) for c in cols} for p in res.points]
    write_table(out / "scaling.tsv", cols, rows, meta, "x=n_a y=log2(total) err=log2_uncertainty")
    n_u, n_m = res.grid
    surf = [
        {"n_a": k, "n_unitaries": int(u), "n_shots": int(m), "mean_error": float(s[i, j])}
        for k, s in res.surfaces.items()
        for i, u in enumerate(n_u)
        for j, m in enumerate(n_m)
    ]
    write_table(out / "surface.tsv", ("n_a", "n_unitaries", "n_shots", "mean_error"), surf, meta, "x=n_unitaries y=n_shots z=mean_error")
    return EXIT_OK


def cmd_disorder(args, cfg: dict) -> int:
    seed = resolve_seed(args, cfg)
    config = quench_from_config(cfg, seed)
    n_p = _positive_int(cfg, "n_patterns")
    n_u = _positive_int(cfg, "n_unitaries", minimum=2)
    n_m = _positive_int(cfg, "n_shots", 150, minimum=2)
    sites = cfg.get("sites")
    mi_pairs = [(tuple(a), tuple(b)) for a, b in cfg.get("mi_pairs", [])]
    try:
        res = disorder_study(
            config,
            n_p,
            n_u,
            n_shots=n_m,
            strength=float(cfg.get("strength", 3.0)),
            sites=sites,
            mi_pairs=mi_pairs,
            clean_unitaries=cfg.get("clean_unitaries"),
            threads=args.threads,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (RecordFormatError, InconsistentRecordsError)):
            raise
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(res.records, out / "records.jsonl")
    write_records(res.clean_records, out / "clean_records.jsonl")
    meta = _provenance("disorder", seed, cfg, sites=list(res.sites), n_patterns=n_p, patterns=[list(p) for p in res.patterns])
    rows = []
    for t, avg, cl in zip(res.times, res.averaged, res.clean):
        rows.append(
            {
                "time": t,
                "purity": avg.purity,
                "stderr": avg.stderr,
                "s2": avg.s2_of_average,
                "stderr_s2": avg.stderr_s2,
                "mean_pattern_s2": avg.mean_of_entropies,
                "flag": avg.flag,
                "clean_purity": cl.purity,
                "clean_stderr": cl.stderr,
                "clean_s2": cl.s2,
                "clean_stderr_s2": cl.stderr_s2,
                "clean_flag": cl.flag,
            }
        )
    write_table(out / "disorder.tsv", tuple(rows[0]), rows, meta, "x=time y=s2,clean_s2 err=stderr_s2,clean_stderr_s2")
    if res.mutual_info:
        mi_rows = [
            {"time": t, "a": a, "b": b, "mutual_info": m.value, "stderr": m.stderr, "flag": m.flag}
            for (a, b), series in res.mutual_info.items()
            for t, m in zip(res.times, series)
        ]
        write_table(out / "mutual_info.tsv", ("time", "a", "b", "mutual_info", "stderr", "flag"), mi_rows, meta, "x=time y=mutual_info series=a,b")
    return EXIT_OK


def cmd_diagnose(args, cfg: dict) -> int:
    seed = None
    if args.records:
        path = Path(args.records)
        basis = cfg.get("basis", "z")
        by_basis = {basis: read_records(path)}
    else:
        seed = resolve_seed(args, cfg)
        n = _positive_int(cfg, "n_qubits", 10)
        n_u = _positive_int(cfg, "n_unitaries", 1000)
        n_m = _positive_int(cfg, "n_shots", 150, minimum=2)
        lam = cfg.get("lambda_meas", 1.0)
        bases = cfg.get("bases", "xyz")
        if not bases or set(bases) - set("xyz"):
            raise ConfigError("bases must be a combination of x, y, z")
        by_basis = {b: simulate_projection_records(n, n_u, n_m, seed, b, _per_qubit(lam, n, "lambda_meas")) for b in bases}
    try:
        report = uniformity_diagnostics(by_basis)
        if next(iter(by_basis.values()))[0].n_qubits >= 2:
            crosstalk_diagnostics(by_basis, report=report)
    except ValueError as exc:
        raise InconsistentRecordsError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = _provenance(
        "diagnose",
        seed,
        cfg,
        gamma=report.gamma,
        fisher_chi2=report.fisher_chi2,
        fisher_pairs=report.fisher_pairs,
        fisher_band=report.fisher_band,
        excluded=[list(e) for e in report.excluded],
    )
    cols = ("basis", "p_lim", "ci_low", "ci_high", "gamma", "chi2", "dof", "chi2_low", "chi2_high", "n_samples", "ks_statistic", "ks_pvalue")
    rows = [
        {
            "basis": f.basis,
            "p_lim": f.p_lim,
            "ci_low": f.ci[0],
            "ci_high": f.ci[1],
            "gamma": f.gamma,
            "chi2": f.chi2,
            "dof": f.dof,
            "chi2_low": f.chi2_band[0],
            "chi2_high": f.chi2_band[1],
            "n_samples": f.n_samples,
            "ks_statistic": f.ks_statistic,
            "ks_pvalue": f.ks_pvalue,
        }
        for f in report.fits.values()
    ]
    write_table(out / "diagnostics.tsv", cols, rows, meta)
    pair_rows = [
        {"basis": b, "i": i + 1, "j": j + 1, "pearson": c[i, j], "pvalue": report.pvalues[b][i, j]}
        for b, c in report.pearson.items()
        for i in range(len(c))
        for j in range(i + 1, len(c))
    ]
    if pair_rows:
        write_table(out / "crosstalk.tsv", ("basis", "i", "j", "pearson", "pvalue"), pair_rows, meta)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "scaling": cmd_scaling,
    "disorder": cmd_disorder,
    "diagnose": cmd_diagnose,
}


def _seed(text: str) -> int:
    val = int(text)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmentropy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rmentropy {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=_seed, help="master seed (drawn and printed if absent)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", default=".", help="output directory")
        if name in ("estimate", "diagnose"):
            p.add_argument("--records", help="record file (one JSON record per line)")
        if name == "estimate":
            p.add_argument("--masks", help="'all', 'connected-from-1' or lists like '1,2;3'")
            p.add_argument("--histogram", action="store_true", help="also write per-unitary full-system x values")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        cfg = load_config(args.config, args.command)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RecordFormatError, InconsistentRecordsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
