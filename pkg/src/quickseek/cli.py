"""Command-line front end.

Usage::

    quickseek simulate  --config run.yaml [--seed N] [--trials N] [--threads N] [--out DIR]
    quickseek dp-solve  --preset fig2-4 --out surfaces/
    quickseek sweep     --preset table2 --out tables/
    quickseek ratio-map --preset fig7 --out maps/
    quickseek check

Exit codes: 0 success, 1 failed checks, 2 invalid configuration, 3 too many
truncated trials, 4 dynamic programme did not converge.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .harness import (SWEEP_AXES, STRATEGIES, CalibrationError, calibrate_fip, default_threads,
                      evaluate, sweep as run_sweep)
from .low_complexity import LowComplexityConfig, design_thresholds_lc
from .models import model_from_dict, model_to_dict
from .multistage import design_thresholds_multi
from .optimal_mixed import DPConvergenceError, extract_regions, solve_optimal
from .single_search import SingleConfig, design_threshold_single

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_TRUNCATED, EXIT_DP = 0, 1, 2, 3, 4
PRESETS = ("table1", "table2", "fig2-4", "fig7", "fig8")

SOLVER_KEYS = ("res2", "res3", "tol", "max_iter", "n_quad")
TOP_KEYS = {"command", "model", "strategy", "strategies", "pi0", "zeta", "n_trials", "seed",
            "calibrate", "thresholds", "solver", "K", "c", "per_trial_csv", "sweep", "ratio_map",
            "description"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending location."""


# -- config loading and validation -----------------------------------------------

def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"--preset: unknown preset {name!r}; valid options: {', '.join(PRESETS)}")
    text = resources.files("quickseek").joinpath("presets", f"{name}.yaml").read_text()
    return yaml.safe_load(text)


def load_config(path: str | None, preset: str | None) -> dict:
    if (path is None) == (preset is None):
        raise ConfigError("exactly one of --config or --preset is required")
    if preset is not None:
        return load_preset(preset)
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def _number(cfg, key, where, lo=None, hi=None, integer=False):
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}.{key}: expected an integer, got {value!r}")
    if lo is not None and value <= lo or hi is not None and value >= hi:
        raise ConfigError(f"{where}.{key}: {value!r} outside ({lo}, {hi})")
    return int(value) if integer else float(value)


def validate(cfg: dict) -> dict:
    """Check keys and types; returns ``cfg`` unchanged on success."""
    unknown = sorted(set(cfg) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"config: unknown keys {unknown}; valid keys: {sorted(TOP_KEYS)}")
    if "model" in cfg:
        if not isinstance(cfg["model"], dict):
            raise ConfigError("config.model: expected a mapping with a 'family' key")
        try:
            model_from_dict(cfg["model"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config.model: {exc}") from exc
    for key in cfg.get("strategies", [cfg["strategy"]] if "strategy" in cfg else []):
        if key not in STRATEGIES:
            raise ConfigError(f"config.strategies: unknown strategy {key!r}; "
                              f"valid options: {', '.join(STRATEGIES)}")
    if "pi0" in cfg:
        _number(cfg, "pi0", "config", 0.0, 1.0 + 1e-12)
    if "zeta" in cfg:
        _number(cfg, "zeta", "config", 0.0, 1.0)
    if "n_trials" in cfg:
        _number(cfg, "n_trials", "config", 0, integer=True)
    if "solver" in cfg:
        bad = sorted(set(cfg["solver"]) - set(SOLVER_KEYS))
        if bad:
            raise ConfigError(f"config.solver: unknown keys {bad}; valid keys: {list(SOLVER_KEYS)}")
    if "sweep" in cfg:
        sw = cfg["sweep"]
        if sw.get("axis") not in SWEEP_AXES:
            raise ConfigError(f"config.sweep.axis: unknown axis {sw.get('axis')!r}; "
                              f"valid options: {', '.join(SWEEP_AXES)}")
        if not sw.get("values"):
            raise ConfigError("config.sweep.values: axis list is empty")
    if "ratio_map" in cfg:
        rm = cfg["ratio_map"]
        if rm.get("axis") not in ("mu_sigma_grid", "kappa"):
            raise ConfigError("config.ratio_map.axis: must be 'mu_sigma_grid' or 'kappa'")
        lists = ("mu", "sigma") if rm["axis"] == "mu_sigma_grid" else ("kappa",)
        for key in lists:
            if not rm.get(key):
                raise ConfigError(f"config.ratio_map.{key}: axis list is empty")
    return cfg


def _overrides(cfg, args):
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.trials is not None:
        cfg["n_trials"] = args.trials
    return cfg


# -- output helpers ----------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def config_hash(cfg: dict) -> str:
    text = json.dumps(_clean(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def metadata(cfg: dict, command: str) -> dict:
    return {"tool": "quickseek", "version": __version__, "command": command,
            "config_hash": config_hash(cfg), "master_seed": int(cfg.get("seed", 0)),
            "config": _clean(cfg)}


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# -- strategy configuration ---------------------------------------------------------

def _strategies(cfg):
    if "strategies" in cfg:
        return list(cfg["strategies"])
    if "strategy" in cfg:
        return [cfg["strategy"]]
    raise ConfigError("config: 'strategy' or 'strategies' is required")


def _solver(cfg):
    return dict(cfg.get("solver", {}))


def _build_config(strategy, model, cfg, threads):
    """Calibrated, explicit or analytic-design configuration of one strategy."""
    pi0 = cfg["pi0"]
    thresholds = cfg.get("thresholds", {}).get(strategy)
    if "calibrate" in cfg:
        cal = cfg["calibrate"]
        result = calibrate_fip(strategy, model, pi0, cal.get("target", 0.1),
                               cal.get("tolerance", 0.01), cal.get("n_trials_per_probe", 4000),
                               int(cfg.get("seed", 0)), threads, solver=_solver(cfg),
                               K=cfg.get("K", 2))
        return result.config, {"knob": result.knob, "probe_fip": result.fip,
                               "converged": result.converged, "monotone": result.monotone}
    if strategy == "single":
        if thresholds:
            return SingleConfig(pi0=pi0, B=float(thresholds["B"])), {}
        return design_threshold_single(pi0, cfg["zeta"]), {}
    if strategy == "low_complexity":
        if thresholds:
            return LowComplexityConfig(pi0=pi0, **{k: float(v) for k, v in thresholds.items()}), {}
        return design_thresholds_lc(pi0, cfg["zeta"]), {}
    if strategy == "multistage":
        return design_thresholds_multi(pi0, cfg["zeta"], cfg.get("K", 2)), {}
    if strategy == "optimal":
        if "c" not in cfg:
            raise ConfigError("config.c: the optimal strategy needs a cost c (or a calibrate section)")
        return solve_optimal(model, pi0, float(cfg["c"]), **_solver(cfg)), {"knob": cfg["c"]}
    raise ConfigError(f"config.strategies: unknown strategy {strategy!r}")


def _describe(config):
    if hasattr(config, "phi_s"):
        return {"c": config.c, "phi_s": config.phi_s}
    out = {k: v for k, v in config.__dict__.items() if not k.startswith("_")}
    for name in ("a_r", "b_r"):
        if hasattr(config, name):
            out[name] = getattr(config, name)
    return out


# -- commands -----------------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path, threads: int) -> int:
    if "sweep" in cfg:
        return cmd_sweep(cfg, out, threads)
    model = model_from_dict(cfg["model"])
    n = int(cfg.get("n_trials", 10_000))
    seed = int(cfg.get("seed", 0))
    results = []
    code = EXIT_OK
    for strategy in _strategies(cfg):
        config, extra = _build_config(strategy, model, cfg, threads)
        s = evaluate(strategy, model, config, n, seed, threads, keep_records=cfg.get("per_trial_csv", False))
        results.append({"strategy": strategy, "config": _describe(config), **extra, **s.as_dict()})
        if s.records:
            write_csv(out / f"trials_{strategy}.csv",
                      ["seed", "tau0", "tau1", "n_switches", "claim_correct", "truncated"],
                      [(r.seed, r.tau0, r.tau1, r.n_switches, r.claim_correct, r.truncated)
                       for r in s.records])
        if s.truncation_failed:
            print(f"{strategy}: {s.n_truncated} of {s.n_trials} trials truncated", file=sys.stderr)
            code = EXIT_TRUNCATED
    write_json(out / "summary.json", {"schema": f"quickseek.simulate/{SCHEMA_VERSION}",
                                      "metadata": metadata(cfg, "simulate"),
                                      "model": model_to_dict(model), "results": results})
    return code


def _sweep_common(cfg, threads):
    common = {"pi0": cfg.get("pi0"), "zeta": cfg.get("zeta"), "n_trials": int(cfg.get("n_trials", 10_000)),
              "master_seed": int(cfg.get("seed", 0)), "threads": threads, "solver": _solver(cfg),
              "K": cfg.get("K", 2)}
    if "model" in cfg:
        common["model"] = model_from_dict(cfg["model"])
    if "c" in cfg:
        common["c"] = float(cfg["c"])
    if "calibrate" in cfg:
        cal = cfg["calibrate"]
        common.update(calibrate=True, target=cal.get("target", 0.1), tolerance=cal.get("tolerance", 0.01),
                      n_trials_per_probe=cal.get("n_trials_per_probe", 4000))
    return common


def _sweep_table(rows, strategies, axis_header):
    header = list(axis_header)
    for s in strategies:
        header += [f"{s}_asd", f"{s}_asd_se", f"{s}_fip", f"{s}_fip_se", f"{s}_knob"]
    header.append("ratio")
    table = []
    for row in rows:
        value = row["value"]
        line = list(value) if isinstance(value, (list, tuple)) else [value]
        for s in strategies:
            r = row[s]
            line += [r["asd"], r["asd_se"], r["fip"], r["fip_se"], r["knob"]]
        line.append(row.get("ratio", float("nan")))
        table.append(line)
    return header, table


def cmd_sweep(cfg: dict, out: Path, threads: int) -> int:
    sw = cfg.get("sweep")
    if not sw:
        raise ConfigError("config.sweep: a sweep section with axis and values is required")
    strategies = sw.get("strategies") or _strategies(cfg)
    rows = run_sweep(sw["axis"], sw["values"], strategies, _sweep_common(cfg, threads),
                     progress=lambda m: print(m, file=sys.stderr))
    header, table = _sweep_table(rows, strategies, [sw["axis"]])
    write_csv(out / "sweep.csv", header, table)
    write_json(out / "sweep.json", {"schema": f"quickseek.sweep/{SCHEMA_VERSION}",
                                    "metadata": metadata(cfg, "sweep"), "columns": header, "rows": rows})
    truncated = any(r[s]["n_truncated"] > 1e-3 * cfg.get("n_trials", 10_000) for r in rows for s in strategies)
    return EXIT_TRUNCATED if truncated else EXIT_OK


def cmd_ratio_map(cfg: dict, out: Path, threads: int) -> int:
    rm = cfg.get("ratio_map")
    if not rm:
        raise ConfigError("config.ratio_map: a ratio_map section is required")
    strategies = ["single", rm.get("mixed", "low_complexity")]
    common = _sweep_common(cfg, threads)
    if rm["axis"] == "mu_sigma_grid":
        values = [(mu, sigma) for mu in rm["mu"] for sigma in rm["sigma"]]
        axis_header = ["mu", "sigma"]
    else:
        values = list(rm["kappa"])
        common.update(kappa0=rm.get("kappa0", 1.0), theta=rm.get("theta", 2.0))
        axis_header = ["kappa"]
    rows = run_sweep(rm["axis"], values, strategies, common, progress=lambda m: print(m, file=sys.stderr))
    header, table = _sweep_table(rows, strategies, axis_header)
    write_csv(out / "ratio_map.csv", header, table)
    write_json(out / "ratio_map.json", {"schema": f"quickseek.ratio_map/{SCHEMA_VERSION}",
                                        "metadata": metadata(cfg, "ratio-map"), "columns": header,
                                        "rows": rows})
    return EXIT_OK


def cmd_dp_solve(cfg: dict, out: Path) -> int:
    model = model_from_dict(cfg["model"])
    if "c" not in cfg or "pi0" not in cfg:
        raise ConfigError("config: dp-solve needs 'c' and 'pi0'")
    solver = _solver(cfg)
    try:
        policy = solve_optimal(model, float(cfg["pi0"]), float(cfg["c"]), **solver)
    except DPConvergenceError as exc:
        print(f"{exc.kind} residual {exc.residual:.6e} after {exc.sweeps} sweeps", file=sys.stderr)
        return EXIT_DP
    grid = policy.U.grid
    nodes = grid.nodes
    regions = policy.regions
    write_csv(out / "v_slice.csv", ["p11", "pmix", "value"],
              [(p[0], p[1], v) for p, v in zip(nodes, policy.v.values)])
    write_csv(out / "U_scan.csv", ["p11", "pmix", "value", "in_R_tau", "in_R_phi"],
              [(p[0], p[1], u, t, f) for p, u, t, f in
               zip(nodes, policy.U.values, regions.r_tau, regions.r_phi)])
    write_csv(out / "Phi_c.csv", ["p11", "pmix", "value"],
              [(p[0], p[1], v) for p, v in zip(nodes, policy.Phi_c.values)])
    write_json(out / "dp_header.json", {
        "schema": f"quickseek.dp/{SCHEMA_VERSION}", "metadata": metadata(cfg, "dp-solve"),
        "phi_s": policy.phi_s, "c": policy.c, "pi0": policy.pi0,
        "res2": policy.U.grid.resolution, "res3": policy.V_refine.grid.resolution,
        "region_tol": policy.region_tol,
        "residual_refine": policy.V_refine.residual, "sweeps_refine": policy.V_refine.sweeps,
        "residual_scan": policy.U.residual, "sweeps_scan": policy.U.sweeps})
    return EXIT_OK


def read_dump(out: Path):
    """Reload a dp-solve dump: header plus the three node tables as arrays."""
    header = json.loads((out / "dp_header.json").read_text(encoding="utf-8"))
    tables = {}
    for name in ("v_slice", "U_scan", "Phi_c"):
        with open(out / f"{name}.csv", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        tables[name] = np.array([[float(x) for x in r] for r in rows[1:]])
    return header, tables


def cmd_check(threads: int) -> int:
    from .checks import run_checks
    results = run_checks()
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quickseek", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "dp-solve", "sweep", "ratio-map", "check"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--preset", help=f"shipped configuration: {', '.join(PRESETS)}")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, help="worker processes (default: $QUICKSEEK_THREADS or CPU count)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--trials", type=int, help="Monte Carlo trials per evaluation")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads or default_threads()
    try:
        if args.command == "check":
            return cmd_check(threads)
        cfg = validate(_overrides(load_config(args.config, args.preset), args))
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, threads)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, threads)
        if args.command == "ratio-map":
            return cmd_ratio_map(cfg, out, threads)
        return cmd_dp_solve(cfg, out)
    except (ConfigError, CalibrationError, KeyError, TypeError, ValueError) as exc:
        msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except DPConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DP


if __name__ == "__main__":
    sys.exit(main())
