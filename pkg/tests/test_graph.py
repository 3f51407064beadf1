import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zico.errors import ParameterError
from zico.graph import (DagGraph, generate_ba, generate_er, is_acyclic, read_edges,
                        split_support, write_edges)


def test_er_extremes():
    assert generate_er(2, 0.0, seed=1).n_edges == 0
    g = generate_er(5, 1.0, seed=1)
    assert g.n_edges == 10
    assert is_acyclic(g.adjacency(), tol=0)


def test_er_mean_edge_count_matches_binomial():
    d, p, reps = 20, 0.25, 1000
    counts = np.array([generate_er(d, p, seed=s).n_edges for s in range(reps)])
    pairs = d * (d - 1) // 2
    se = math.sqrt(pairs * p * (1 - p) / reps)
    assert abs(counts.mean() - pairs * p) <= 3 * se
    assert abs(counts.mean() - 47.5) <= 3


@pytest.mark.parametrize("d,m,expected", [(4, 3, 6), (2, 1, 1), (50, 3, 144)])
def test_ba_edge_counts(d, m, expected):
    # node t attaches to min(m, t) earlier nodes: sum_{t=1}^{d-1} min(m, t)
    assert sum(min(m, t) for t in range(1, d)) == expected
    assert generate_ba(d, m, seed=0).n_edges == expected


def test_ba_labels_are_permuted():
    orders = {generate_ba(10, 2, seed=s).topo_order for s in range(5)}
    assert tuple(range(10)) not in orders or len(orders) > 1


@pytest.mark.parametrize("bad", [dict(d=1, p=0.5), dict(d=5, p=1.5), dict(d=5, p=-0.1)])
def test_er_rejects_bad_parameters(bad):
    with pytest.raises(ParameterError):
        generate_er(seed=0, **bad)


def test_ba_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        generate_ba(3, 3, seed=0)
    with pytest.raises(ParameterError):
        generate_ba(3, 0, seed=0)


@settings(max_examples=60, deadline=None)
@given(d=st.integers(2, 25), p=st.floats(0, 1), m=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_generators_are_acyclic_and_deterministic(d, p, m, seed):
    g = generate_er(d, p, seed=seed)
    assert is_acyclic(g.adjacency(), tol=0)
    assert g == generate_er(d, p, seed=seed)
    if d > m:
        b = generate_ba(d, m, seed=seed)
        assert is_acyclic(b.adjacency(), tol=0)
        assert b == generate_ba(d, m, seed=seed)
        assert all(k != j for k, j in b.edges)


def test_is_acyclic_examples():
    assert is_acyclic(np.zeros((3, 3)))
    assert not is_acyclic(np.array([[0, 0.5], [0.5, 0]]), tol=0.3)
    assert is_acyclic(np.array([[0, 0.5], [0.2, 0]]), tol=0.3)
    with pytest.raises(ParameterError):
        is_acyclic(np.zeros((2, 3)))


def test_dag_graph_rejects_cycles_and_self_loops():
    with pytest.raises(ParameterError):
        DagGraph.from_edges(3, [(0, 1), (1, 2), (2, 0)])
    with pytest.raises(ParameterError):
        DagGraph.from_edges(2, [(0, 0)])
    g = DagGraph.from_edges(3, [(0, 2), (1, 2)])
    assert g.parents(2) == [0, 1]


def test_split_support_examples():
    g = generate_er(8, 0.6, seed=3)
    full = split_support(g, 1.0, seed=0)
    assert np.array_equal(full.m0, full.m1)
    assert np.array_equal(full.m0, g.adjacency().astype(bool))

    ten = DagGraph.from_edges(6, [(i, j) for i in range(5) for j in range(i + 1, 6)][:10])
    disjoint = split_support(ten, 0.0, seed=0)
    assert not np.any(disjoint.m0 & disjoint.m1)
    assert disjoint.m0.sum() + disjoint.m1.sum() == 10

    eight = DagGraph.from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3)])
    half = split_support(eight, 0.5, seed=0)
    both = half.m0 & half.m1
    assert both.sum() == 4
    assert (half.m0 & ~half.m1).sum() == 2
    assert (half.m1 & ~half.m0).sum() == 2


@settings(max_examples=40, deadline=None)
@given(rho=st.sampled_from([0, 0.25, 0.5, 0.7, 0.75, 1.0]), seed=st.integers(0, 1000))
def test_split_support_invariants(rho, seed):
    g = generate_er(12, 0.4, seed=seed)
    if g.n_edges == 0:
        return
    masks = split_support(g, rho, seed=seed)
    adj = g.adjacency().astype(bool)
    assert np.array_equal(masks.m0 | masks.m1, adj)
    shared = math.ceil(round(rho * g.n_edges, 9))
    assert (masks.m0 & masks.m1).sum() == shared
    assert masks.overlap == pytest.approx(shared / g.n_edges)


def test_split_support_rejects_empty_graph():
    with pytest.raises(ParameterError):
        split_support(generate_er(4, 0.0, seed=0), 0.5)


def test_edge_list_roundtrip(tmp_path):
    g = generate_ba(12, 3, seed=7)
    path = tmp_path / "graph.edges"
    write_edges(g, path)
    text = path.read_text().splitlines()
    assert text[0] == "# d=12"
    assert all("\t" in line for line in text[1:])
    back = read_edges(path)
    assert back.edges == g.edges and back.d == g.d
