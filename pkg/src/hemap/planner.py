"""Entropy-driven region traversal with waypoint placement, plus random and greedy baselines."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .anomaly import (D_BUFFER, AnomalyBelief, PlanarPose, batch_update, extract_candidates,
                      information_measures)
from .graph import RegionGraph, as_distribution, smooth_distribution
from .synthesis import solve_remc
from .world import (FOD, InspectionWorld, VisibilityIndex, WorldError, astar, graph_move_rule,
                    random_world, sense)

log = logging.getLogger(__name__)

PLANNERS = ("hemap", "random", "greedy")


@dataclass(frozen=True)
class PlannerConfig:
    kind: str = "hemap"
    horizon_K: int = 1
    n_waypoints: int = 2
    n_sample: int = 1000
    delta: float = 1e-3
    total_steps: int = 35
    solver_tol: float = 1e-4
    d_buffer: float = D_BUFFER
    link_distance: float = 0.5
    match_tolerance: float = 0.25

    def __post_init__(self):
        if self.kind not in PLANNERS:
            raise ValueError(f"planner kind must be one of {PLANNERS}")
        if self.horizon_K < 1 or self.n_sample < 1 or self.n_waypoints < 0 or self.total_steps < 0:
            raise ValueError("horizon_K and n_sample must be ≥ 1; counts non-negative")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")


@dataclass(frozen=True)
class Waypoint:
    cell: tuple[int, int]
    heading: float
    step: int
    reached: bool = True


@dataclass
class TrialRecord:
    planner: str
    seed: int
    region_sequence: list[int]
    waypoints: list[Waypoint]
    mu_r_snapshots: list[np.ndarray]
    centroids: list[np.ndarray]
    fods: list[FOD]
    detected: int
    missed: int
    false_positives: int
    path_length: float = 0.0
    solves: int = 0
    aborted: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def detection_rate(self) -> float:
        return self.detected / len(self.fods) if self.fods else 1.0

    def visit_counts(self, n: int) -> np.ndarray:
        return np.bincount(np.asarray(self.region_sequence[1:], dtype=int), minlength=n)


# -- Alg. 2: waypoints ---------------------------------------------------------------

def waypoint_placement(world: InspectionWorld, region: int, mu_p: np.ndarray, n_sample: int,
                       rng: np.random.Generator, rule: str = "proportional",
                       visibility: VisibilityIndex | None = None) -> tuple[tuple[int, int], float]:
    """Pick a (cell, heading) inside ``region``.

    ``n_sample`` candidates are drawn uniformly over the region's free cells
    with uniform headings and scored by the μ_p mass inside their (noise-free,
    wall-occluded) frustum.  ``rule`` selects one: ``proportional`` to score
    (uniform if all scores vanish), ``max`` score (ties by draw order) or
    ``uniform``.
    """
    if n_sample < 1:
        raise ValueError("n_sample must be at least 1")
    cells = world.navigation_grid.free_cells(region)
    if cells.size == 0:
        raise WorldError(f"region {region} has no free cells")
    picks = cells[rng.integers(len(cells), size=n_sample)]
    headings = rng.uniform(-math.pi, math.pi, size=n_sample)
    if rule == "uniform" or n_sample == 1:
        k = int(rng.integers(n_sample)) if rule == "uniform" else 0
    else:
        vis = visibility or VisibilityIndex.for_world(world)
        scores = np.empty(n_sample)
        uniq, inverse = np.unique(picks, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        for j, c in enumerate(uniq):
            sel = inverse == j
            scores[sel] = vis.frustum_scores(c, headings[sel], mu_p)
        total = scores.sum()
        if rule == "max":
            k = int(np.argmax(scores))
        elif rule == "proportional":
            k = int(rng.choice(n_sample, p=scores / total)) if total > 0 else int(rng.integers(n_sample))
        else:
            raise ValueError(f"unknown waypoint rule {rule!r}")
    return (int(picks[k][0]), int(picks[k][1])), float(headings[k])


# -- Alg. 1: region decisions ---------------------------------------------------------------

def _sample_column(P: np.ndarray, current: int, rng: np.random.Generator) -> int:
    col = np.clip(P[:, current], 0.0, None)
    return int(rng.choice(col.size, p=col / col.sum()))


def hemap_step_plan(graph: RegionGraph, current: int, mu_r: np.ndarray, delta: float, k: int,
                    K: int, cached_chain: np.ndarray | None, rng: np.random.Generator,
                    tol: float = 1e-4) -> tuple[int, np.ndarray]:
    """Next region and the chain used.

    Every ``K`` steps (and whenever no chain is cached) the region measure is
    normalized, smoothed by ``delta`` and a REMC chain is solved for it.
    """
    if np.any(np.asarray(mu_r) < 0):
        raise ValueError("region measures must be non-negative")
    chain = cached_chain
    if k % K == 0 or chain is None:
        mu = np.asarray(mu_r, dtype=float)
        target = as_distribution(mu, normalize=True) if mu.sum() > 0 else np.full(graph.n, 1.0 / graph.n)
        target = smooth_distribution(target, delta)
        chain = solve_remc(graph, target, tol=tol).chain
    return _sample_column(chain, current, rng), chain


def baseline_step_plan(kind: str, graph: RegionGraph, current: int, mu_r: np.ndarray,
                       rng: np.random.Generator) -> int:
    """Random: uniform over out-neighbours.  Greedy: highest μ_r among the
    out-neighbours, ties to the lowest index."""
    nbrs = graph.out_neighbors(current)
    if not nbrs:
        raise ValueError(f"region {current} has no out-edges")
    if kind == "random":
        return int(nbrs[int(rng.integers(len(nbrs)))])
    if kind == "greedy":
        options = sorted(nbrs)
        mu = np.asarray(mu_r, dtype=float)
        return int(options[int(np.argmax(mu[options]))])
    raise ValueError(f"unknown baseline {kind!r}")


# -- trials ---------------------------------------------------------------------------------

def match_detections(centroids, fods, tolerance: float) -> tuple[int, int, int]:
    """(detected, missed, false positives): a FOD is found when any centroid lies
    within its radius plus ``tolerance``; a centroid near no FOD is a false positive."""
    hit = [any(np.linalg.norm(c - f.center) <= f.radius + tolerance for c in centroids) for f in fods]
    fp = sum(1 for c in centroids
             if not any(np.linalg.norm(c - f.center) <= f.radius + tolerance for f in fods))
    return sum(hit), len(fods) - sum(hit), fp


WAYPOINT_RULE = {"hemap": "proportional", "random": "uniform", "greedy": "max"}


def run_inspection_trial(world: InspectionWorld, config: PlannerConfig, seed: int,
                         visibility: VisibilityIndex | None = None) -> TrialRecord:
    """One inspection run of ``config.total_steps`` region decisions in ``world``."""
    rng = np.random.default_rng(seed)
    graph = world.graph
    cloud = world.cloud
    nav = world.navigation_grid
    rule = graph_move_rule(graph)
    vis = visibility or VisibilityIndex.for_world(world)
    pose_cov = world.scenario.pose_covariance()
    cell = tuple(world.scenario.start)
    region = int(nav.labels[cell])
    beliefs = AnomalyBelief.prior(len(cloud))
    mu_p, mu_r = information_measures(beliefs, cloud, graph.n)
    regions, waypoints, snaps, notes = [region], [], [], []
    chain, solves, length, aborted = None, 0, 0.0, False
    for k in range(config.total_steps):
        snaps.append(mu_r.copy())
        if config.kind == "hemap":
            try:
                solves += k % config.horizon_K == 0 or chain is None
                nxt, chain = hemap_step_plan(graph, region, mu_r, config.delta, k, config.horizon_K,
                                             chain, rng, config.solver_tol)
            except Exception as exc:  # solver failure aborts the trial
                notes.append(f"step {k}: solver failed: {exc}")
                aborted = True
                break
        else:
            nxt = baseline_step_plan(config.kind, graph, region, mu_r, rng)
        region = nxt
        regions.append(region)
        for _ in range(config.n_waypoints):
            goal, heading = waypoint_placement(world, region, mu_p, config.n_sample, rng,
                                               WAYPOINT_RULE[config.kind], vis)
            try:
                path = astar(nav, cell, goal, rule)
            except WorldError as exc:
                log.info("waypoint skipped: %s", exc)
                notes.append(f"step {k}: {exc}")
                waypoints.append(Waypoint(goal, heading, k, reached=False))
                continue
            length += path.length
            cell = goal
            waypoints.append(Waypoint(goal, heading, k))
            pose = PlanarPose([*nav.center(cell), heading], pose_cov)
            obs = sense(world, pose, rng)
            if obs:
                beliefs = batch_update(cloud, beliefs, obs, config.d_buffer)
                mu_p, mu_r = information_measures(beliefs, cloud, graph.n)
    centroids = extract_candidates(beliefs, cloud, link_distance=config.link_distance)
    det, miss, fp = match_detections(centroids, world.fods, config.match_tolerance)
    return TrialRecord(config.kind, int(seed), regions, waypoints, snaps, centroids, list(world.fods),
                       det, miss, fp, length, solves, aborted, notes)


def trial_seeds(seed: int, trials: int) -> list[tuple[int, int]]:
    """(world seed, planner seed) per trial; worlds are shared across planners for paired comparisons."""
    children = np.random.SeedSequence(seed).spawn(trials)
    out = []
    for ch in children:
        w, p = ch.spawn(2)
        out.append((int(w.generate_state(1)[0]), int(p.generate_state(1)[0])))
    return out


def inspection_trials(scenario, planners, trials: int, seed: int, steps: int = 35,
                      **config) -> dict[str, list[TrialRecord]]:
    """Seeded trials for each planner on the same sequence of random FOD layouts."""
    out = {p: [] for p in planners}
    for wseed, pseed in trial_seeds(seed, trials):
        world = random_world(scenario, np.random.default_rng(wseed))
        vis = VisibilityIndex.for_world(world)
        for p in planners:
            cfg = PlannerConfig(kind=p, total_steps=steps, **config)
            out[p].append(run_inspection_trial(world, cfg, pseed, vis))
    return out
