"""Experiment drivers and CSV emission.

Every driver returns a list of row dataclasses; :func:`emit_plotdata` writes
them with a fixed column order and :func:`read_plotdata` parses them back into
the same type.  Floats are written with 17 significant digits, so a round trip
is exact and reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .graph import RegionGraph, smooth_distribution
from .metrics import time_average_trace
from .planner import PLANNERS, TrialRecord, inspection_trials
from .simulation import spawn_seeds, variance_study
from .synthesis import SynthesisError, solve_fmmc, solve_remc
from .world import Scenario, WorldError, astar, graph_move_rule

log = logging.getLogger(__name__)


# -- row types ----------------------------------------------------------------------

@dataclass(frozen=True)
class GraphWorldRow:
    """k counts averaged terms: k = 1 is the initial distribution itself."""
    trial: int
    k: int
    dev_fmmc: float
    dev_remc: float
    diff: float
    failed: int = 0


@dataclass(frozen=True)
class StepSummaryRow:
    k: int
    median_fmmc: float
    median_remc: float
    q1_diff: float
    median_diff: float
    q3_diff: float


@dataclass(frozen=True)
class VarianceRow:
    k: int
    expected_dev: float
    mle_var: float
    clt_var: float


@dataclass(frozen=True)
class GridworldRow:
    """Deviation of waypoint-based region frequencies from the target, sampled every ``dt`` seconds."""
    trial: int
    t: float
    deviation: float
    obstacle_freq: float
    waypoints: int


@dataclass(frozen=True)
class WaypointRow:
    trial: int
    index: int
    t: float
    region: int
    x: float
    y: float


@dataclass(frozen=True)
class InspectionRow:
    planner: str
    trial: int
    seed: int
    fods: int
    detected: int
    missed: int
    false_positives: int
    detection_rate: float
    path_length: float
    aborted: int
    visits: str


@dataclass(frozen=True)
class InspectionSummaryRow:
    planner: str
    trials: int
    mean_rate: float
    std_rate: float
    mean_false_positives: float
    baseline: str
    mean_paired_diff: float
    t_statistic: float
    p_value: float


# -- CSV -------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def format_plotdata(rows: Sequence, row_type: type) -> str:
    names = [f.name for f in dataclasses.fields(row_type)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        if not isinstance(r, row_type):
            raise TypeError(f"expected {row_type.__name__}, got {type(r).__name__}")
        w.writerow([_fmt(getattr(r, n)) for n in names])
    return buf.getvalue()


def emit_plotdata(rows: Sequence, path: str | Path, row_type: type | None = None) -> Path:
    """Write rows as CSV (one header row, columns in field order); empty rows give a header-only file."""
    if row_type is None:
        if not rows:
            raise ValueError("row_type is required for an empty dataset")
        row_type = type(rows[0])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_plotdata(rows, row_type), encoding="utf-8")
    return path


def parse_plotdata(text: str, row_type: type) -> list:
    fields = dataclasses.fields(row_type)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != [f.name for f in fields]:
        raise ValueError(f"header {header} does not match {row_type.__name__}")
    conv = {int: int, float: float, str: str, "int": int, "float": float, "str": str}
    out = []
    for row in reader:
        out.append(row_type(*(conv[f.type](v) for f, v in zip(fields, row))))
    return out


def read_plotdata(path: str | Path, row_type: type) -> list:
    return parse_plotdata(Path(path).read_text(encoding="utf-8"), row_type)


# -- graph world (expected ergodicity deviation) --------------------------------------

def _random_distribution(rng: np.random.Generator, n: int) -> np.ndarray:
    u = rng.uniform(0.0, 1.0, size=n)
    while u.sum() <= 0:
        u = rng.uniform(0.0, 1.0, size=n)
    return u / u.sum()


def graph_world_experiment(graph: RegionGraph, trials: int, steps: int, seed: int,
                           tol: float = 1e-4) -> list[GraphWorldRow]:
    """Expected time-average deviation ‖E[ρ̂_k] − ρ̄‖₂ of FMMC and REMC chains for random (ρ̄, ρ0)."""
    if trials < 1 or steps < 1:
        raise ValueError("trials and steps must be at least 1")
    rows = []
    for t, ss in enumerate(spawn_seeds(seed, trials)):
        rng = np.random.default_rng(ss)
        target = _random_distribution(rng, graph.n)
        rho0 = _random_distribution(rng, graph.n)
        try:
            avgs = {}
            for name, fn in (("fmmc", solve_fmmc), ("remc", solve_remc)):
                avgs[name] = time_average_trace(fn(graph, target, tol=tol).chain, rho0, steps)[1]
        except SynthesisError as exc:
            log.warning("trial %d excluded: %s", t, exc)
            rows.extend(GraphWorldRow(t, k, math.nan, math.nan, math.nan, 1) for k in range(1, steps + 1))
            continue
        df = np.linalg.norm(avgs["fmmc"] - target, axis=1)
        dr = np.linalg.norm(avgs["remc"] - target, axis=1)
        rows.extend(GraphWorldRow(t, k + 1, float(df[k]), float(dr[k]), float(df[k] - dr[k]))
                    for k in range(steps))
    return rows


def graph_world_summary(rows: Iterable[GraphWorldRow]) -> list[StepSummaryRow]:
    by_k: dict[int, list[GraphWorldRow]] = {}
    for r in rows:
        if not r.failed:
            by_k.setdefault(r.k, []).append(r)
    out = []
    for k in sorted(by_k):
        f = np.array([r.dev_fmmc for r in by_k[k]])
        m = np.array([r.dev_remc for r in by_k[k]])
        d = np.array([r.diff for r in by_k[k]])
        q1, med, q3 = np.percentile(d, [25, 50, 75])
        out.append(StepSummaryRow(k, float(np.median(f)), float(np.median(m)), float(q1), float(med), float(q3)))
    return out


# -- variance ----------------------------------------------------------------------------

def variance_experiment(P: np.ndarray, target: np.ndarray, start: int, steps: int, trials: int,
                        seed: int) -> list[VarianceRow]:
    vs = variance_study(P, target, start, steps, trials, seed)
    return [VarianceRow(int(k), float(e), float(a), float(b))
            for k, e, a, b in zip(vs.steps, vs.expected_dev, vs.per_step_mle, vs.per_step_clt)]


# -- grid-world ergodicity ---------------------------------------------------------------------

def scenario_target(sc: Scenario, preset: str | Sequence[float]) -> np.ndarray:
    if isinstance(preset, str):
        if preset == "uniform":
            t = np.ones(sc.graph.n)
        elif preset in sc.targets:
            t = sc.targets[preset]
        else:
            raise WorldError(f"unknown target preset {preset!r}; have {sorted(sc.targets)}")
    else:
        t = np.asarray(preset, dtype=float)
    if t.shape != (sc.graph.n,) or np.any(t < 0) or t.sum() <= 0:
        raise WorldError("target must be a non-negative vector over the scenario's regions")
    return t / t.sum()


def gridworld_ergodicity_experiment(sc: Scenario, duration_s: float, trials: int, seed: int,
                                    preset: str | Sequence[float] = "area", dt: float = 10.0,
                                    tol: float = 1e-6, delta: float = 1e-3,
                                    waypoint_log: list | None = None) -> list[GridworldRow]:
    """REMC region sequence with uniformly random waypoints and A* paths at the scenario speed.

    Frequencies count waypoint arrivals per region (the start counts as the
    first visit) and are held between arrivals; occupied cells form an extra
    region with target 0, and ``obstacle_freq`` is the fraction of traversed
    path cells that are occupied.
    """
    if duration_s <= 0 or trials < 1 or dt <= 0:
        raise ValueError("duration, trials and dt must be positive")
    grid = sc.grid
    n = sc.graph.n
    target = scenario_target(sc, preset)
    chain = solve_remc(sc.graph, smooth_distribution(target, delta), tol=tol).chain
    ext_target = np.append(target, 0.0)
    rule = graph_move_rule(sc.graph)
    cells_by_region = [grid.free_cells(r) for r in range(n)]
    times = np.arange(0.0, duration_s + 1e-9, dt)
    rows = []
    for t_idx, ss in enumerate(spawn_seeds(seed, trials)):
        rng = np.random.default_rng(ss)
        cell = tuple(sc.start)
        region = int(grid.labels[cell])
        counts = np.zeros(n + 1)
        counts[region] = 1
        arrivals = [(0.0, counts.copy())]
        clock, path_cells, blocked_cells = 0.0, 1, 0
        while True:
            col = chain[:, region]
            nxt = int(rng.choice(n, p=col / col.sum()))
            cells = cells_by_region[nxt]
            goal = tuple(int(v) for v in cells[int(rng.integers(len(cells)))])
            path = astar(grid, cell, goal, rule)
            clock += path.length / sc.speed
            if clock > duration_s:
                break
            pc = np.array(path.cells)
            path_cells += len(pc) - 1
            blocked_cells += int(grid.occupied[pc[1:, 0], pc[1:, 1]].sum())
            cell, region = goal, nxt
            counts[region] += 1
            arrivals.append((clock, counts.copy()))
            if waypoint_log is not None:
                x, y = grid.center(goal)
                waypoint_log.append(WaypointRow(t_idx, len(arrivals) - 1, clock, region, float(x), float(y)))
        obstacle = blocked_cells / path_cells
        a_times = np.array([a[0] for a in arrivals])
        for t in times:
            j = int(np.searchsorted(a_times, t, side="right")) - 1
            c = arrivals[j][1]
            freq = c / c.sum()
            rows.append(GridworldRow(t_idx, float(t), float(np.linalg.norm(freq - ext_target)),
                                     float(obstacle), int(c.sum())))
    return rows


def gridworld_summary(rows: Iterable[GridworldRow]) -> tuple[float, float]:
    """(median deviation at t = 0, median deviation at the last sample time)."""
    rows = list(rows)
    t_end = max(r.t for r in rows)
    first = [r.deviation for r in rows if r.t == 0.0]
    last = [r.deviation for r in rows if r.t == t_end]
    return float(np.median(first)), float(np.median(last))


# -- inspection -------------------------------------------------------------------------------

def inspection_rows(records: dict[str, list[TrialRecord]], n_regions: int) -> list[InspectionRow]:
    rows = []
    for planner, recs in records.items():
        for i, r in enumerate(recs):
            visits = " ".join(str(int(v)) for v in r.visit_counts(n_regions))
            rows.append(InspectionRow(planner, i, r.seed, len(r.fods), r.detected, r.missed,
                                      r.false_positives, r.detection_rate, r.path_length,
                                      int(r.aborted), visits))
    return rows


def inspection_summary(rows: Sequence[InspectionRow], reference: str = "hemap") -> list[InspectionSummaryRow]:
    """Per-planner means plus a paired one-sided t-test of ``reference`` minus each other planner."""
    by = {}
    for r in rows:
        by.setdefault(r.planner, []).append(r)
    out = []
    ref = {r.trial: r.detection_rate for r in by.get(reference, [])}
    for planner in [p for p in PLANNERS if p in by] + sorted(set(by) - set(PLANNERS)):
        rs = by[planner]
        rates = np.array([r.detection_rate for r in rs])
        fps = np.array([r.false_positives for r in rs], dtype=float)
        diff, tstat, p = math.nan, math.nan, math.nan
        if planner != reference and ref:
            pairs = [(ref[r.trial], r.detection_rate) for r in rs if r.trial in ref]
            d = np.array([a - b for a, b in pairs])
            diff = float(d.mean())
            if d.size >= 2:
                if np.all(d == d[0]):
                    tstat, p = (math.inf, 0.0) if d[0] > 0 else (math.nan, 1.0)
                else:
                    res = stats.ttest_1samp(d, 0.0, alternative="greater")
                    tstat, p = float(res.statistic), float(res.pvalue)
        out.append(InspectionSummaryRow(planner, len(rs), float(rates.mean()),
                                        float(rates.std(ddof=1)) if rates.size > 1 else 0.0,
                                        float(fps.mean()), reference if planner != reference else "",
                                        diff, tstat, p))
    return out


def inspection_experiment(sc: Scenario, planners: Sequence[str], trials: int, seed: int,
                          steps: int = 35, **config) -> list[InspectionRow]:
    records = inspection_trials(sc, planners, trials, seed, steps, **config)
    return inspection_rows(records, sc.graph.n)
