"""Command-line entry point: ``hemap <subcommand> [options]``.

Outputs go to ``--out`` (a directory, default ``.``); one-line summaries go to
stdout.  Failures exit with status 1 and a single JSON line on stderr:
``{"error": <kind>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (GraphWorldRow, GridworldRow, InspectionRow, InspectionSummaryRow,
                          StepSummaryRow, VarianceRow, WaypointRow, emit_plotdata,
                          format_plotdata, graph_world_experiment, graph_world_summary,
                          gridworld_ergodicity_experiment, gridworld_summary, inspection_experiment,
                          inspection_summary, variance_experiment)
from .graph import RegionGraph, as_distribution, check_stochastic, load_graph, uniform
from .metrics import WeightSequence, ned, spectral_summary
from .planner import PLANNERS
from .synthesis import solve
from .world import default_scenario_path, load_scenario, validate_scenario

DATA = Path(__file__).parent / "data"
DEFAULT_GRAPH = DATA / "ballast7.json"

SCHEMAS = {
    "graph-experiment": "graph_world.csv: trial,k,dev_fmmc,dev_remc,diff,failed (k = number of "
                        "averaged terms, k=1 is rho0); graph_world_summary.csv: k,median_fmmc,"
                        "median_remc,q1_diff,median_diff,q3_diff",
    "variance": "variance.csv: k,expected_dev,mle_var,clt_var",
    "simulate": "simulate.csv: k,expected_dev,mle_var,clt_var",
    "gridworld": "gridworld.csv: trial,t,deviation,obstacle_freq,waypoints; "
                 "gridworld_waypoints.csv: trial,index,t,region,x,y",
    "inspect": "inspection.csv: planner,trial,seed,fods,detected,missed,false_positives,"
               "detection_rate,path_length,aborted,visits (space-separated per-region counts); "
               "inspection_summary.csv: planner,trials,mean_rate,std_rate,mean_false_positives,"
               "baseline,mean_paired_diff,t_statistic,p_value",
    "synthesize": "chain.json: {kind, n, target, chain}; stdout: kind,objective,iterations,"
                  "certified_gap,converged,ned",
    "metrics": "stdout: ned,upper_bound,sle,slem,slem_exact,dev_k1..dev_kN",
}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


# -- helpers -------------------------------------------------------------------------------

def _graph(args) -> RegionGraph:
    return load_graph(args.graph or DEFAULT_GRAPH)


def _target(spec: str | None, g: RegionGraph) -> np.ndarray:
    if spec in (None, "uniform"):
        return g.target if (spec is None and g.target is not None) else uniform(g.n)
    path = Path(spec)
    if path.exists():
        doc = json.loads(path.read_text(encoding="utf-8"))
        values = doc["target"] if isinstance(doc, dict) else doc
    else:
        values = [float(v) for v in spec.split(",")]
    return as_distribution(values, normalize=True)


def _load_chain(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    P = check_stochastic(np.array(doc["chain"], dtype=float))
    target = np.array(doc["target"], dtype=float) if "target" in doc else None
    return P, target


def _out(args, name: str) -> Path:
    return Path(args.out) / name


def _print_rows(rows, row_type):
    sys.stdout.write(format_plotdata(rows, row_type))


# -- subcommands -----------------------------------------------------------------------------

def cmd_synthesize(args):
    g = _graph(args)
    rho = _target(args.target, g)
    res = solve(args.kind, g, rho, tol=args.tol)
    doc = {"kind": args.kind, "n": g.n, "target": rho.tolist(), "chain": res.chain.tolist()}
    path = _out(args, args.chain_name)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    gap = "" if res.certified_gap is None else format(res.certified_gap, ".6g")
    print("kind,objective,iterations,certified_gap,converged,ned")
    print(f"{args.kind},{res.objective:.10g},{res.iterations},{gap},{int(res.converged)},"
          f"{ned(res.chain, rho):.10g}")


def cmd_metrics(args):
    P, chain_target = _load_chain(args.chain)
    g = load_graph(args.graph) if args.graph else None
    if g is not None:
        check_stochastic(P, g)
    rho = _target(args.target, g) if args.target else chain_target
    if rho is None:
        raise CliError("usage", "no target: pass --target or a chain document with a target")
    rep = spectral_summary(P, rho, WeightSequence.parse(args.weights), steps=args.steps)
    row = rep.as_row()
    print(",".join(row))
    print(",".join(format(float(v), ".10g") for v in row.values()))


def cmd_simulate(args):
    P, target = _load_chain(args.chain)
    if target is None:
        vals, vecs = np.linalg.eig(P)
        v = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
        target = v / v.sum()
    rows = variance_experiment(P, target, args.start, args.steps, args.trials, args.seed)
    emit_plotdata(rows, _out(args, "simulate.csv"), VarianceRow)
    print(f"simulate: {len(rows)} steps -> {_out(args, 'simulate.csv')}")


def cmd_graph_experiment(args):
    g = _graph(args)
    rows = graph_world_experiment(g, args.trials, args.steps, args.seed, tol=args.tol)
    emit_plotdata(rows, _out(args, "graph_world.csv"), GraphWorldRow)
    summary = graph_world_summary(rows)
    emit_plotdata(summary, _out(args, "graph_world_summary.csv"), StepSummaryRow)
    _print_rows(summary, StepSummaryRow)


def cmd_variance(args):
    g = _graph(args)
    rho = _target(args.target, g)
    P = solve(args.kind, g, rho, tol=args.tol).chain
    rows = variance_experiment(P, rho, args.start, args.steps, args.trials, args.seed)
    emit_plotdata(rows, _out(args, "variance.csv"), VarianceRow)
    ratio = [r.mle_var / r.clt_var for r in rows if r.k >= min(100, args.steps)]
    print(f"variance: mle/clt ratio in [{min(ratio):.3f}, {max(ratio):.3f}] for k >= {min(100, args.steps)}")


def cmd_gridworld(args):
    sc = load_scenario(args.scenario or default_scenario_path())
    log_rows: list = []
    rows = gridworld_ergodicity_experiment(sc, args.duration, args.trials, args.seed,
                                           preset=args.preset, dt=args.dt, waypoint_log=log_rows)
    emit_plotdata(rows, _out(args, "gridworld.csv"), GridworldRow)
    emit_plotdata(log_rows, _out(args, "gridworld_waypoints.csv"), WaypointRow)
    first, last = gridworld_summary(rows)
    print(f"gridworld: median deviation {first:.4f} at t=0, {last:.4f} at t={args.duration:g}")


def cmd_inspect(args):
    sc = load_scenario(args.scenario or default_scenario_path())
    planners = list(PLANNERS) if args.planner == "all" else [args.planner]
    rows = inspection_experiment(sc, planners, args.trials, args.seed, args.steps,
                                 n_waypoints=args.waypoints, n_sample=args.samples)
    emit_plotdata(rows, _out(args, "inspection.csv"), InspectionRow)
    summary = inspection_summary(rows)
    emit_plotdata(summary, _out(args, "inspection_summary.csv"), InspectionSummaryRow)
    _print_rows(summary, InspectionSummaryRow)


def cmd_world_validate(args):
    sc = load_scenario(args.path)
    problems = validate_scenario(sc)
    report = {"scenario": sc.name, "shape": list(sc.grid.shape), "regions": sc.graph.n,
              "free_cells": sc.grid.region_sizes().tolist(), "problems": problems}
    print(json.dumps(report))
    if problems:
        raise CliError("invalid_scenario", "; ".join(problems))


# -- parser -------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    common.add_argument("--out", default=".", help="output directory (default .)")
    common.add_argument("--config", help="JSON file of option defaults, keyed by option name")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="hemap", parents=[common],
                                 description="Ergodic region-level inspection planning toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        epilog = f"output columns: {SCHEMAS[name]}" if name in SCHEMAS else None
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text, epilog=epilog)
        p.set_defaults(func=fn)
        return p

    p = add("synthesize", cmd_synthesize, "Solve for a chain on a region graph.")
    p.add_argument("--graph", help="graph document (default: bundled ballast graph)")
    p.add_argument("--target", default=None, help="'uniform', comma-separated weights or a JSON file")
    p.add_argument("--kind", choices=["remc", "fmmc", "reversible", "symmetric"], default="remc")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--chain-name", default="chain.json")

    p = add("metrics", cmd_metrics, "Ergodicity metrics of a chain.")
    p.add_argument("--chain", required=True)
    p.add_argument("--graph")
    p.add_argument("--target")
    p.add_argument("--weights", default="factorial", help="uniform | factorial | horizon:K")
    p.add_argument("--steps", type=int, default=10)

    p = add("simulate", cmd_simulate, "Sample trajectories and compare time-average variance with the CLT.")
    p.add_argument("--chain", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--trials", type=int, default=1000)

    p = add("graph-experiment", cmd_graph_experiment, "FMMC vs REMC expected deviation on random targets.")
    p.add_argument("--graph")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-4)

    p = add("variance", cmd_variance, "Time-average variance study for a solved chain.")
    p.add_argument("--graph")
    p.add_argument("--target", default="uniform")
    p.add_argument("--kind", choices=["remc", "fmmc", "reversible", "symmetric"], default="remc")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--trials", type=int, default=1000)

    p = add("gridworld", cmd_gridworld, "Region visitation deviation over simulated time on a scenario.")
    p.add_argument("--scenario")
    p.add_argument("--duration", type=float, default=1200.0)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--preset", default="area", help="target preset name from the scenario, or 'uniform'")
    p.add_argument("--dt", type=float, default=10.0)

    p = add("inspect", cmd_inspect, "Inspection trials with FOD detection scoring.")
    p.add_argument("--scenario")
    p.add_argument("--planner", choices=[*PLANNERS, "all"], default="all")
    p.add_argument("--trials", type=int, default=15)
    p.add_argument("--steps", type=int, default=35)
    p.add_argument("--waypoints", type=int, default=2)
    p.add_argument("--samples", type=int, default=1000)

    w = sub.add_parser("world", parents=[common], help="Scenario utilities.")
    wsub = w.add_subparsers(dest="world_command", required=True)
    v = wsub.add_parser("validate", parents=[common], help="Check scenario invariants.")
    v.add_argument("path")
    v.set_defaults(func=cmd_world_validate)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = ap.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError("config", f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("config", "config must be a JSON object")
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    unknown = [k for k in cfg if not hasattr(args, k.replace("-", "_"))]
    if unknown:
        raise CliError("config", f"unknown config keys for this command: {unknown}")
    for k, v in cfg.items():
        key = k.replace("-", "_")
        if key not in explicit:
            setattr(args, key, v)
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        args.func(args)
    except CliError as exc:
        sys.stderr.write(json.dumps({"error": exc.kind, "message": str(exc)}) + "\n")
        return 1
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
