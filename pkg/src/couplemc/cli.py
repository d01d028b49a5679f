"""Experiment runner: declarative config in, deterministic CSV/JSON out.

Subcommands: validate, run, oracle, report.  Exit codes: 0 ok, 2 config
error, 3 simulation diverged, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .analysis import fit_power_law
from .coefficients import default_sample_points, validate_field
from .config import ExperimentConfig, load_config
from .coupling import coupling_time_expectation, default_couple_tol
from .errors import ConfigError, CoupleMCError, SimulationDivergedError, ValidationError
from .fk_solver import (ModulusExperimentConfig, ResultTable, fit_result_table,
                        modulus_experiment, solve_u, SolveRequest)
from .oracles import (RunningMaxQuery, bm_coupling_expectation, heat_kernel,
                      running_max_bounds, sgn_drift_density)
from .registry import build_field, build_terminal
from .sde_engine import RngStream, TimeGrid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

OUTPUT_ROOT_ENV = "COUPLEMC_OUTPUT_ROOT"


def _run_validate(cfg: ExperimentConfig) -> tuple[ResultTable, dict]:
    field = build_field(cfg.field_name, cfg.field_params)
    points = default_sample_points(field.dim)
    report = validate_field(field, points, times=(0.0, cfg.horizon / 2, cfg.horizon))
    rows = [
        ("passed", float(report.passed)),
        ("eig_min", report.eig_min),
        ("eig_max", report.eig_max),
        ("eig_lo_required", report.eig_lo_required),
        ("eig_hi_required", report.eig_hi_required),
        ("b_max", report.b_max),
        ("c_max", report.c_max),
        ("asymmetry_max", report.asymmetry_max),
        ("n_points", float(report.n_points)),
    ]
    table = ResultTable(columns=["metric", "value"], rows=rows)
    return table, {"passed": report.passed, "report": report.summary()}


def _run_couple(cfg: ExperimentConfig) -> tuple[ResultTable, dict]:
    field = build_field(cfg.field_name, cfg.field_params)
    grid = TimeGrid(horizon=cfg.horizon, steps=cfg.steps)
    rng = RngStream(cfg.seed)
    t = cfg.eval_horizon if cfg.eval_horizon is not None else cfg.horizon
    tol = cfg.couple_tol if cfg.couple_tol is not None \
        else default_couple_tol(grid, field)
    x = np.asarray(cfg.base_point, dtype=float)
    e = np.asarray(cfg.direction, dtype=float)
    e = e / np.linalg.norm(e)
    rows = []
    for i, r in enumerate(cfg.ladder):
        est = coupling_time_expectation(
            field, x, x + r * e, t, grid, cfg.n_paths, rng, couple_tol=tol,
            n_workers=cfg.workers, path_offset=i * cfg.n_paths)
        rows.append((r, t, cfg.n_paths, est.mean, est.stderr,
                     est.fraction_coupled, tol))
    table = ResultTable(
        columns=["distance", "horizon", "n_paths", "mean_tau_capped",
                 "stderr", "fraction_coupled", "couple_tol"],
        rows=rows)
    fits = {}
    means = [row[3] for row in rows]
    if len(rows) >= 3 and all(m > 0 for m in means):
        fits["tau_power_fit"] = fit_power_law(
            [(row[0], row[3]) for row in rows]).as_dict()
    return table, fits


def _run_solve(cfg: ExperimentConfig) -> tuple[ResultTable, dict]:
    field = build_field(cfg.field_name, cfg.field_params)
    terminal = build_terminal(cfg.terminal_name, cfg.terminal_params)
    grid = TimeGrid(horizon=cfg.horizon, steps=cfg.steps)
    req = SolveRequest(field=field, terminal=terminal,
                       terminal_sup=terminal.sup_norm,
                       eval_point=np.asarray(cfg.base_point, dtype=float),
                       n_paths=cfg.n_paths, grid=grid)
    est, se = solve_u(req, RngStream(cfg.seed), n_workers=cfg.workers)
    table = ResultTable(
        columns=["estimate", "stderr", "n_paths", "horizon", "dt"],
        rows=[(est, se, cfg.n_paths, cfg.horizon, grid.dt)])
    return table, {"estimate": est, "stderr": se}


def _run_modulus(cfg: ExperimentConfig) -> tuple[ResultTable, dict]:
    field = build_field(cfg.field_name, cfg.field_params)
    terminal = build_terminal(cfg.terminal_name, cfg.terminal_params)
    grid = TimeGrid(horizon=cfg.horizon, steps=cfg.steps)
    mcfg = ModulusExperimentConfig(
        field=field, terminal=terminal, terminal_sup=terminal.sup_norm,
        base_point=np.asarray(cfg.base_point, dtype=float),
        direction=np.asarray(cfg.direction, dtype=float),
        distances=cfg.ladder, grid=grid, n_paths=cfg.n_paths,
        couple_tol=cfg.couple_tol, intermediate_time=cfg.eval_horizon)
    table = modulus_experiment(mcfg, RngStream(cfg.seed), n_workers=cfg.workers)
    return table, dict(table.metadata)


def _oracle_y_grid(params: dict) -> np.ndarray:
    lo = float(params.get("y_min", -8.0))
    hi = float(params.get("y_max", 8.0))
    n = int(params.get("y_count", 161))
    return np.linspace(lo, hi, n)


def _run_oracle(cfg: ExperimentConfig) -> tuple[ResultTable, dict]:
    p = cfg.oracle_params
    name = cfg.oracle_name
    if name == "sgn":
        theta = float(p.get("theta", 1.0))
        t = float(p.get("t", 1.0))
        x = float(p.get("x", 0.0))
        ys = _oracle_y_grid(p)
        rows = [(float(y), float(sgn_drift_density(theta, t, x, y))) for y in ys]
        return ResultTable(columns=["y", "density"], rows=rows), {}
    if name == "heat":
        a0 = float(p.get("a0", 1.0))
        b0 = float(p.get("b0", 0.0))
        t = float(p.get("t", 1.0))
        x = float(p.get("x", 0.0))
        ys = _oracle_y_grid(p)
        rows = [(float(y), heat_kernel([[a0]], [b0], t, [x], [y])) for y in ys]
        return ResultTable(columns=["y", "density"], rows=rows), {}
    if name == "running-max":
        t = float(p.get("t", 1.0))
        c1 = float(p.get("c1", 1.0))
        c2 = float(p.get("c2", 1.0))
        xs = [float(v) for v in np.atleast_1d(p.get("x_values", [0.5, 1.0, 2.0]))]
        rows = []
        for x in xs:
            b = running_max_bounds(RunningMaxQuery(t=t, x=x, c1=c1, c2=c2))
            rows.append((x, b.upper_tail, b.lower_level, b.exact))
        return ResultTable(
            columns=["x", "upper_tail", "lower_level", "exact"], rows=rows), {}
    # bm-coupling
    t = float(p.get("t", 1.0))
    d0s = [float(v) for v in np.atleast_1d(p.get("d0_values", [0.2, 0.1, 0.05]))]
    rows = [(d0, bm_coupling_expectation(d0, t)) for d0 in d0s]
    return ResultTable(columns=["d0", "expectation"], rows=rows), {}


_RUNNERS = {
    "validate": _run_validate,
    "couple": _run_couple,
    "solve": _run_solve,
    "modulus": _run_modulus,
    "oracle": _run_oracle,
}


def output_root(override=None) -> str:
    if override:
        return override
    return os.environ.get(OUTPUT_ROOT_ENV, "runs")


def run_experiment(cfg: ExperimentConfig, out_root, run_dir=None) -> str:
    """Execute a config and persist results.csv + summary.json; returns the
    run directory."""
    start = time.monotonic()
    table, extras = _RUNNERS[cfg.kind](cfg)
    wall = time.monotonic() - start
    if run_dir is None:
        stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%d-%H%M%S-%f")
        run_dir = os.path.join(out_root, f"{cfg.kind}-{stamp}-seed{cfg.seed}")
    os.makedirs(run_dir, exist_ok=True)
    table.write_csv(os.path.join(run_dir, "results.csv"))
    summary = {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "version": f"couplemc {__version__}",
        "config": cfg.resolved(),
        "wall_time_s": wall,
    }
    summary.update(extras)
    with open(os.path.join(run_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return run_dir


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v)}")


def _cmd_report(run_dir) -> int:
    path = os.path.join(run_dir, "results.csv")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [tuple(_parse_csv_cell(c) for c in row) for row in reader]
    table = ResultTable(columns=columns, rows=rows)
    if "distance" in columns:
        if "mean_tau_capped" in columns:
            pairs = list(zip(table.column("distance").astype(float),
                             table.column("mean_tau_capped").astype(float)))
            fits = {"tau_power_fit": fit_power_law(pairs).as_dict()}
        else:
            fits = fit_result_table(table)
    else:
        fits = {}
    json.dump(fits, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def _parse_csv_cell(cell: str):
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="couplemc",
        description="Monte Carlo experiments on coupled diffusions and "
                    "parabolic PDE solutions.")
    parser.add_argument("--version", action="version",
                        version=f"couplemc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a config (and its "
                                "coefficient field) without running")
    p_validate.add_argument("config")

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-root", default=None,
                       help=f"run directory root (default $"
                            f"{OUTPUT_ROOT_ENV} or ./runs)")
    p_run.add_argument("--run-dir", default=None,
                       help="exact output directory (overrides the "
                            "timestamped default)")

    p_oracle = sub.add_parser("oracle", help="emit closed-form oracle tables")
    p_oracle.add_argument("config")
    p_oracle.add_argument("--output-root", default=None)
    p_oracle.add_argument("--run-dir", default=None)

    p_report = sub.add_parser("report", help="re-emit fits from a run dir")
    p_report.add_argument("run_dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return _cmd_report(args.run_dir)
        cfg = load_config(args.config)
        if args.command == "validate":
            if cfg.field_name is not None:
                table, extras = _run_validate(cfg)
                print(extras["report"])
                if not extras["passed"]:
                    return EXIT_CONFIG
            print(f"config ok: kind={cfg.kind} seed={cfg.seed}")
            return EXIT_OK
        if args.command == "oracle" and cfg.kind != "oracle":
            raise ConfigError("the oracle subcommand needs kind = oracle")
        run_dir = run_experiment(cfg, output_root(args.output_root),
                                 run_dir=args.run_dir)
        print(run_dir)
        return EXIT_OK
    except SimulationDivergedError as exc:
        _emit_error("simulation-diverged", exc)
        return EXIT_DIVERGED
    except (ConfigError, ValidationError) as exc:
        _emit_error("config-error", exc)
        return EXIT_CONFIG
    except CoupleMCError as exc:
        _emit_error("error", exc)
        return EXIT_CONFIG
    except OSError as exc:
        _emit_error("io-error", exc)
        return EXIT_IO


def _emit_error(kind: str, exc: Exception) -> None:
    json.dump({"error": kind, "message": str(exc)}, sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
