import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemap.graph import (GraphError, RegionGraph, check_stochastic, check_strong_connectivity,
                         complete_graph, load_graph, metropolis_hastings, smooth_distribution,
                         uniform, verify_chain)
from hemap.metrics import expected_time_average


def test_two_node_complete_is_valid():
    g = load_graph({"n": 2, "edges": [[0, 1], [1, 0]]})
    assert check_strong_connectivity(g)


def test_one_way_triangle_is_valid(triangle):
    assert triangle.one_way_edges() == [(2, 0)]


def test_isolated_node_rejected():
    with pytest.raises(GraphError, match="strongly connected"):
        load_graph({"n": 3, "edges": [[0, 1], [1, 0]]})


def test_load_from_text_and_file(tmp_path):
    doc = {"n": 2, "edges": [[0, 1], [1, 0]], "names": ["a", "b"], "target": [1, 3]}
    p = tmp_path / "g.json"
    p.write_text(json.dumps(doc))
    g = load_graph(p)
    assert g.names == ("a", "b")
    assert np.allclose(g.target, [0.25, 0.75])
    assert load_graph(json.dumps(doc)) == g


@pytest.mark.parametrize("doc", [{"edges": []}, {"n": 2, "edges": [[0]]}, {"n": 2, "edges": [[0, 5], [5, 0]]}])
def test_malformed_documents(doc):
    with pytest.raises(GraphError):
        load_graph(doc)


def test_strong_connectivity_examples(ballast):
    assert check_strong_connectivity(np.array([[0, 1], [1, 0]], dtype=bool))
    assert not check_strong_connectivity(np.array([[0, 1], [0, 0]], dtype=bool))
    assert check_strong_connectivity(ballast)


def _closure(A):
    n = A.shape[0]
    R = A.copy() | np.eye(n, dtype=bool)
    for k in range(n):
        R = R | (R[:, [k]] & R[[k], :])
    return R


@pytest.mark.parametrize("n", [2, 3])
def test_connectivity_matches_closure_exhaustive(n):
    offdiag = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in itertools.product([False, True], repeat=len(offdiag)):
        A = np.zeros((n, n), dtype=bool)
        for (i, j), b in zip(offdiag, bits):
            A[i, j] = b
        assert check_strong_connectivity(A) == bool(_closure(A).all())


@settings(max_examples=300, deadline=None)
@given(n=st.integers(4, 6), seed=st.integers(0, 2**32 - 1), p=st.floats(0.05, 0.6))
def test_connectivity_matches_closure_random(n, seed, p):
    rng = np.random.default_rng(seed)
    A = rng.random((n, n)) < p
    np.fill_diagonal(A, False)
    assert check_strong_connectivity(A) == bool(_closure(A).all())


def test_smooth_distribution_examples():
    assert np.allclose(smooth_distribution(np.array([1.0, 0.0]), 0.001), [1.001 / 1.002, 0.001 / 1.002],
                       atol=1e-15)
    rho = np.array([0.2, 0.5, 0.3])
    assert np.array_equal(smooth_distribution(rho, 0.0), rho)
    assert np.allclose(smooth_distribution(uniform(5), 0.3), uniform(5))


@given(st.lists(st.floats(0, 10), min_size=2, max_size=8).filter(lambda v: sum(v) > 0),
       st.floats(0, 1))
def test_smooth_distribution_properties(values, delta):
    rho = np.array(values) / sum(values)
    out = smooth_distribution(rho, delta)
    assert abs(out.sum() - 1) < 1e-12
    if delta > 0:
        assert np.all(out > 0)
    order = np.argsort(rho, kind="stable")
    assert np.all(np.diff(out[order]) >= -1e-15)


def test_verify_chain_examples(triangle):
    r = verify_chain(np.array([[0.0, 1.0], [1.0, 0.0]]), uniform(2))
    assert r.stationary and r.irreducible and r.detailed_balance
    r = verify_chain(np.eye(3), np.array([0.2, 0.3, 0.5]))
    assert r.stationary and not r.irreducible
    # doubly stochastic, so uniform is stationary, but mass circulates 0 -> 1 -> 2 -> 0
    P = np.array([[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
    check_stochastic(P, triangle)
    r = verify_chain(P, uniform(3))
    assert r.stationary and not r.detailed_balance


def test_verify_chain_rejects_zero_target_for_balance():
    with pytest.raises(ValueError):
        verify_chain(np.eye(2), np.array([1.0, 0.0]))


def test_check_stochastic_support(triangle):
    P = np.array([[0.5, 0.0, 0.0], [0.5, 0.5, 0.5], [0.0, 0.5, 0.5]])
    check_stochastic(P, triangle)
    Q = np.array([[0.5, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.5, 0.5]])  # Q[2, 0] uses 0 -> 2
    with pytest.raises(ValueError, match="absent"):
        check_stochastic(Q, triangle)
    with pytest.raises(ValueError):
        check_stochastic(np.array([[0.5, 0.5], [0.4, 0.5]]))


def test_metropolis_hastings_examples():
    assert np.allclose(metropolis_hastings(complete_graph(2), uniform(2)), [[0, 1], [1, 0]])
    P = metropolis_hastings(complete_graph(3), uniform(3))
    assert np.allclose(P, 0.5 * (np.ones((3, 3)) - np.eye(3)))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 7), seed=st.integers(0, 2**32 - 1))
def test_metropolis_hastings_properties(n, seed):
    from conftest import random_strong_graph

    rng = np.random.default_rng(seed)
    g = random_strong_graph(rng, n)
    rho = rng.uniform(0.05, 1, n)
    rho /= rho.sum()
    P = metropolis_hastings(g, rho)
    check_stochastic(P, g)
    assert P.min() >= 0 and P.max() <= 1
    r = verify_chain(P, rho, tol=1e-9)
    assert r.stationary and r.detailed_balance


def test_metropolis_hastings_zero_on_one_way_edge(triangle):
    P = metropolis_hastings(triangle, uniform(3))
    assert P[0, 2] == 0.0


def test_graph_requires_two_regions():
    with pytest.raises(GraphError):
        RegionGraph(1, frozenset())


def test_self_loops_are_implicit():
    g = RegionGraph(2, frozenset({(0, 0), (0, 1), (1, 0)}))
    assert g.edges == frozenset({(0, 1), (1, 0)})
    assert g.support().all()


def test_column_convention_propagates_distributions():
    P = np.array([[0.9, 0.0], [0.1, 1.0]])  # 0 -> 1 with 0.1
    assert np.allclose(expected_time_average(P, np.array([1.0, 0.0]), 2), [0.95, 0.05])
