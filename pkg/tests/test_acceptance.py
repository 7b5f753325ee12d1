"""The ten acceptance criteria, each at its stated tolerance and budget.

Every test records one PASS/FAIL line (printed at the end of the pytest run
under "acceptance criteria") and then asserts it.  Failing criteria are left
failing; their analysis lives in the project's decisions ledger.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import INSPECTION_TRIALS, random_strong_graph, record_acceptance
from hemap.anomaly import AnomalyBelief, MatchedScores, ReferenceCloud, batch_update
from hemap.experiments import (graph_world_experiment, graph_world_summary,
                               gridworld_ergodicity_experiment, gridworld_summary, inspection_rows,
                               inspection_summary)
from hemap.graph import RegionGraph, check_stochastic, complete_graph, uniform, verify_chain
from hemap.metrics import expected_time_average, ned
from hemap.simulation import sample_trajectories, variance_study
from hemap.synthesis import solve, solve_fmmc, solve_remc, solve_reversible
from hemap.world import OccupancyGrid, WorldError, astar
from oracles import grid_optimum, strongly_connected_3node_topologies
from test_world import dijkstra

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])
HALF = np.full((2, 2), 0.5)


def test_ac1_closed_form_synthesis():
    t0 = time.perf_counter()
    remc = solve_remc(complete_graph(2), uniform(2)).chain
    fmmc = solve_fmmc(complete_graph(2), uniform(2)).chain
    elapsed = time.perf_counter() - t0
    err = max(np.abs(remc - SWAP).max(), np.abs(fmmc - HALF).max())
    ok = err <= 1e-6 and elapsed < 1.0
    record_acceptance("AC1", ok, f"max entry error {err:.2e} (<= 1e-6), {elapsed:.2f} s (< 1 s)")
    assert ok


def fraction_time_average(P, rho0, K):
    n = len(rho0)
    rho = list(rho0)
    acc = [Fraction(0)] * n
    for _ in range(K):
        acc = [a + r for a, r in zip(acc, rho)]
        rho = [sum(P[i][j] * rho[j] for j in range(n)) for i in range(n)]
    return [a / K for a in acc]


def test_ac2_example_time_averages():
    F = Fraction
    printed = {
        "fmmc": [(1, 0), (F(3, 4), F(1, 4)), (F(2, 3), F(1, 3)), (F(5, 8), F(3, 8))],
        "remc": [(1, 0), (F(1, 2), F(1, 2)), (F(2, 3), F(1, 3)), (F(1, 2), F(1, 2))],
    }
    exact = {"fmmc": [[F(1, 2), F(1, 2)], [F(1, 2), F(1, 2)]], "remc": [[0, 1], [1, 0]]}
    chains = {"fmmc": HALF, "remc": SWAP}
    worst = 0.0
    for kind, seq in printed.items():
        for K, want in enumerate(seq, start=1):
            assert fraction_time_average(exact[kind], [F(1), F(0)], K) == list(want)
            got = expected_time_average(chains[kind], np.array([1.0, 0.0]), K)
            worst = max(worst, float(np.abs(got - np.array([float(w) for w in want])).max()))
    ok = worst <= 1e-12
    record_acceptance("AC2", ok, f"max deviation from the printed sequences {worst:.1e} (<= 1e-12)")
    assert ok


def test_ac3_one_way_edge_triangle(triangle):
    t0 = time.perf_counter()
    rho = uniform(3)
    rev = solve_reversible(triangle, rho).chain
    remc = solve_remc(triangle, rho).chain
    elapsed = time.perf_counter() - t0
    n_rev, n_remc = ned(rev, rho), ned(remc, rho)
    one_way = triangle.one_way_edges()
    flow = max(abs(rev[j, i]) for i, j in one_way)
    ok = (abs(n_rev - 0.606) <= 0.02 and abs(n_remc - 0.223) <= 0.02 and n_rev > n_remc
          and flow <= 1e-9 and verify_chain(rev, rho, tol=1e-8).detailed_balance and elapsed < 10)
    record_acceptance("AC3", ok, f"ned reversible {n_rev:.4f} (0.606 +- 0.02), remc {n_remc:.4f} "
                                 f"(0.223 +- 0.02), one-way flow {flow:.1e}, {elapsed:.1f} s (< 10 s)")
    assert ok


@pytest.mark.slow
def test_ac4_graph_world_study(ballast):
    t0 = time.perf_counter()
    rows = graph_world_experiment(ballast, 1000, 10, seed=0, tol=1e-4)
    elapsed = time.perf_counter() - t0
    summary = {s.k: s for s in graph_world_summary(rows)}
    failed = sum(r.failed for r in rows if r.k == 1)
    medians_ok = all(summary[k].median_remc < summary[k].median_fmmc for k in range(2, 11))
    q1 = {k: summary[k].q1_diff for k in range(2, 11)}
    q1_ok = all(v >= 0 for v in q1.values())
    ok = medians_ok and q1_ok and elapsed < 300
    bad_q1 = ", ".join(f"k={k}: {v:+.4f}" for k, v in q1.items() if v < 0) or "none"
    record_acceptance("AC4", ok, f"REMC median < FMMC median at k=2..10: {medians_ok}; "
                                 f"negative Q1 of FMMC-REMC: {bad_q1}; {failed} solver failures; "
                                 f"{elapsed:.0f} s (< 300 s)")
    assert ok


@pytest.mark.slow
def test_ac5_variance_study(ballast):
    t0 = time.perf_counter()
    P = solve_remc(ballast, uniform(7)).chain
    study = variance_study(P, uniform(7), 0, 1000, 1000, seed=0)
    elapsed = time.perf_counter() - t0
    sel = slice(99, 1000)
    ratio = study.per_step_mle[sel] / study.per_step_clt[sel]
    slope = study.loglog_slope(100, 1000)
    within = bool(np.all((ratio >= 0.5) & (ratio <= 2.0)))
    ok = within and -1.3 <= slope <= -0.7 and elapsed < 120
    record_acceptance("AC5", ok, f"MLE/CLT ratio over k=100..1000 in [{ratio.min():.3f}, {ratio.max():.3f}] "
                                 f"(need [0.5, 2]); slope {slope:.3f} (need [-1.3, -0.7]); "
                                 f"{elapsed:.0f} s (< 120 s)")
    assert ok


@pytest.mark.slow
def test_ac6_solver_matches_grid_search():
    worst, above, count = 0.0, -math.inf, 0
    for edges in strongly_connected_3node_topologies():
        g = RegionGraph(3, frozenset(edges))
        for kind in ("remc", "reversible", "fmmc", "symmetric_uniform"):
            r = solve(kind, g, uniform(3), tol=1e-6)
            best = grid_optimum(kind, edges)
            worst = max(worst, abs(r.objective - best))
            above = max(above, r.objective - best)
            count += 1
    ok = worst <= 1e-2
    # the largest gaps are the grid's own resolution: optima at entries of 1/3 sit between grid points
    record_acceptance("AC6", ok, f"{count} (topology, program) pairs, worst gap to the 0.01 grid "
                                 f"{worst:.2e} (<= 1e-2); solver above grid by at most {above:.1e}")
    assert ok


@pytest.mark.slow
def test_ac7_half_space_and_cdf():
    from test_anomaly import half_space_errors, normal_cdf_error
    mc = half_space_errors(count=50, samples=10**6, seed=7)
    cdf = normal_cdf_error(step=1e-3)
    ok = mc <= 1e-2 and cdf <= 1e-7
    record_acceptance("AC7", ok, f"worst Monte Carlo gap over 50 instances {mc:.2e} (<= 1e-2); "
                                 f"worst cdf error on [-8, 8] step 1e-3 {cdf:.1e} (<= 1e-7)")
    assert ok


@pytest.mark.slow
def test_ac8_inspection_study(inspection_records, tank):
    rows = inspection_rows(inspection_records, tank.graph.n)
    summ = {s.planner: s for s in inspection_summary(rows)}
    h = summ["hemap"]
    parts, ok = [], INSPECTION_TRIALS >= 15 and inspection_records.elapsed < 900
    for other in ("random", "greedy"):
        s = summ[other]
        better = h.mean_rate > s.mean_rate and s.p_value < 0.05
        ok &= better
        parts.append(f"vs {other} {s.mean_rate:.3f} (p={s.p_value:.2g})")
    record_acceptance("AC8", ok, f"hemap mean detection {h.mean_rate:.3f} over {h.trials} trials; "
                                 + "; ".join(parts) + f"; {inspection_records.elapsed:.0f} s (< 900 s)")
    assert ok


@pytest.mark.slow
def test_ac9_gridworld_ergodicity(tank):
    rows = gridworld_ergodicity_experiment(tank, 1200.0, 30, seed=0)
    first, last = gridworld_summary(rows)
    obstacle = max(r.obstacle_freq for r in rows)
    ok = last < 0.5 * first and obstacle == 0.0
    record_acceptance("AC9", ok, f"median deviation {first:.3f} at t=0 -> {last:.3f} at t=1200 "
                                 f"(need < {0.5 * first:.3f}); obstacle frequency {obstacle:g} (need 0)")
    assert ok


def invariant_violations(ballast):
    rng = np.random.default_rng(10)
    v = {"stochasticity": 0, "posterior": 0, "reproducibility": 0, "astar": 0}
    # stochasticity and stationarity of synthesized chains on random strongly connected graphs
    for _ in range(15):
        n = int(rng.integers(2, 6))
        g = random_strong_graph(rng, n, 0.3)
        rho = rng.uniform(0.2, 1.0, n)
        rho /= rho.sum()
        for kind in ("remc", "fmmc"):
            P = solve(kind, g, rho).chain
            try:
                check_stochastic(P, g, tol=1e-8)
            except ValueError:
                v["stochasticity"] += 1
            v["stochasticity"] += not verify_chain(P, rho, tol=1e-6).stationary
    # posterior normalization and invariance of unobserved points
    pts = np.column_stack([np.arange(40) * 0.1, np.zeros(40)])
    cloud = ReferenceCloud(pts, np.tile([0.0, 1.0], (40, 1)), np.zeros(40, dtype=int))
    for _ in range(200):
        prior = AnomalyBelief(rng.uniform(0.01, 0.99, 40))
        m = int(rng.integers(0, 15))
        refs = rng.integers(0, 40, size=m)
        c0 = rng.normal(size=m) * 3
        post = batch_update(cloud, prior, MatchedScores(refs, c0, c0 + rng.uniform(0, 2, m)))
        hit = np.isin(cloud.knn, refs).any(axis=1)
        v["posterior"] += int(np.any(np.abs(post.p_h0 + post.p_h1 - 1) > 1e-12))
        v["posterior"] += int(not np.array_equal(post.p_h0[~hit], prior.p_h0[~hit]))
    # reproducibility of sampling and experiments
    P = solve_remc(ballast, uniform(7)).chain
    v["reproducibility"] += not np.array_equal(sample_trajectories(P, 0, 200, 50, seed=3),
                                               sample_trajectories(P, 0, 200, 50, seed=3))
    v["reproducibility"] += graph_world_experiment(ballast, 2, 4, seed=5) != \
        graph_world_experiment(ballast, 2, 4, seed=5)
    # A* against Dijkstra on random grids up to 20x20
    for _ in range(300):
        H, W = (int(x) for x in rng.integers(1, 21, size=2))
        occ = rng.random((H, W)) < rng.uniform(0, 0.45)
        grid = OccupancyGrid(1.0, occ, np.zeros((H, W), dtype=int))
        free = grid.free_cells()
        if len(free) == 0:
            continue
        s, g = (tuple(free[i]) for i in rng.integers(len(free), size=2))
        ref = dijkstra(grid, s, g)
        try:
            got = astar(grid, s, g).length
        except WorldError:
            got = math.inf
        v["astar"] += not (got == ref or abs(got - ref) <= 1e-9)
    return v


def test_ac10_invariant_suites(ballast):
    v = invariant_violations(ballast)
    ok = sum(v.values()) == 0
    record_acceptance("AC10", ok, ", ".join(f"{k} {n}" for k, n in v.items())
                      + " violations (module suites under tests/ carry the full property tests)")
    assert ok
