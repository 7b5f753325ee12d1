import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemap.graph import metropolis_hastings, uniform
from hemap.simulation import (Trajectory, clt_variance, empirical_time_average, sample_trajectories,
                              sample_trajectory, spawn_seeds, trace_rows, variance_study)
from hemap.synthesis import solve_remc

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_swap_chain_alternates():
    assert sample_trajectory(SWAP, 0, 4, seed=1).regions.tolist() == [0, 1, 0, 1]


def test_identity_chain_is_constant():
    t = sample_trajectory(np.eye(3), 2, 50, seed=3)
    assert set(t.regions.tolist()) == {2}


def test_bad_arguments():
    with pytest.raises(ValueError):
        sample_trajectory(SWAP, 0, 0)
    with pytest.raises(ValueError):
        sample_trajectory(SWAP, 5, 3)
    with pytest.raises(ValueError):
        variance_study(SWAP, uniform(2), 0, 10, 1)
    with pytest.raises(ValueError):
        Trajectory([])


def test_single_step_frequencies_within_binomial_band():
    P = np.array([[0.2, 0.5, 0.1], [0.3, 0.0, 0.6], [0.5, 0.5, 0.3]])
    m = 100_000
    trajs = sample_trajectories(P, 0, 2, m, seed=11)
    freq = np.bincount(trajs[:, 1], minlength=3) / m
    sd = np.sqrt(P[:, 0] * (1 - P[:, 0]) / m)
    assert np.all(np.abs(freq - P[:, 0]) <= 3 * sd + 1e-12)


def test_batched_and_single_sampling_agree_in_law():
    P = np.array([[0.1, 0.7], [0.9, 0.3]])
    a = sample_trajectories(P, 1, 2, 20_000, seed=4)[:, 1].mean()
    b = np.mean([sample_trajectory(P, 1, 2, seed=s).regions[1] for s in range(4000)])
    assert abs(a - 0.3) < 0.02 and abs(b - 0.3) < 0.03


def test_empirical_time_average_examples():
    assert np.allclose(empirical_time_average(np.array([0, 1, 0, 1])), [0.5, 0.5])
    assert np.array_equal(empirical_time_average(np.array([2]), 3), [0, 0, 1])
    for K in (2, 6, 40):
        t = sample_trajectory(SWAP, 0, K, seed=0)
        assert np.array_equal(empirical_time_average(t, 2), [0.5, 0.5])
    with pytest.raises(ValueError):
        empirical_time_average(np.array([], dtype=int))


def test_clt_formula():
    clt = clt_variance(uniform(7), 1000)
    assert clt[99] == pytest.approx(6 / 700, rel=1e-12)
    assert np.all(np.diff(clt) < 0)


def test_deterministic_chain_has_zero_mle():
    study = variance_study(SWAP, uniform(2), 0, 30, 20, seed=5)
    assert np.all(study.per_step_mle == 0)
    assert np.all(study.per_step_clt > 0)


def test_reproducible_bit_for_bit():
    P = np.array([[0.2, 0.5, 0.1], [0.3, 0.0, 0.6], [0.5, 0.5, 0.3]])
    a = sample_trajectory(P, 1, 500, seed=123).regions
    b = sample_trajectory(P, 1, 500, seed=123).regions
    assert np.array_equal(a, b)
    A = sample_trajectories(P, 1, 50, 30, seed=9)
    assert np.array_equal(A, sample_trajectories(P, 1, 50, 30, seed=9))
    # trial i depends only on its own spawned stream
    assert np.array_equal(A[:10], sample_trajectories(P, 1, 50, 10, seed=9))


def test_spawned_streams_differ():
    s = spawn_seeds(7, 3)
    draws = [np.random.default_rng(x).random() for x in s]
    assert len(set(draws)) == 3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_transitions_follow_support(seed, n):
    rng = np.random.default_rng(seed)
    P = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
    P[np.arange(n), np.arange(n)] += 0.1
    P /= P.sum(axis=0)
    t = sample_trajectory(P, 0, 200, seed=seed).regions
    assert np.all(P[t[1:], t[:-1]] > 0)


def test_long_run_consistency(ballast):
    rho = np.array([0.05, 0.10, 0.10, 0.25, 0.05, 0.40, 0.05])
    P = metropolis_hastings(ballast, rho)
    fails = 0
    for seed in range(20):
        avg = empirical_time_average(sample_trajectory(P, 0, 100_000, seed=seed), 7)
        fails += np.max(np.abs(avg - rho)) >= 0.02
    assert fails == 0


def test_trace_rows_shape_and_convergence():
    rows = trace_rows(SWAP, np.array([1.0, 0.0]), 200)
    assert len(rows) == 200 and set(rows[0]) == {"k", "dist_0", "dist_1", "avg_0", "avg_1"}
    # the raw distribution oscillates while the time average settles
    assert {rows[-1]["dist_0"], rows[-2]["dist_0"]} == {0.0, 1.0}
    assert abs(rows[-1]["avg_0"] - 0.5) < 0.01


@pytest.mark.slow
def test_variance_tracks_clt_on_ballast(ballast):
    P = solve_remc(ballast, uniform(7), tol=1e-6).chain
    study = variance_study(P, uniform(7), 0, 1000, 1000, seed=2024)
    assert np.all(study.per_step_mle >= 0)
    slope = study.loglog_slope(100, 1000)
    assert -1.3 <= slope <= -0.7
