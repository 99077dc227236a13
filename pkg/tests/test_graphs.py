import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gatlab.graphs import Graph, adjacency, star_graph


def test_star3_neighbors():
    g = star_graph(3)
    assert g.neighbors == ((0, 1, 2), (0,), (0,))
    assert g.self_loop(0) and not g.self_loop(1)


def test_star2_smallest():
    g = star_graph(2)
    assert g.neighbors == ((0, 1), (0,))


def test_star5_degrees():
    g = star_graph(5)
    assert len(g.neighbors[0]) == 5
    assert all(len(g.neighbors[j]) == 1 for j in range(1, 5))


@pytest.mark.parametrize("n", [-1, 0, 1])
def test_star_too_small(n):
    with pytest.raises(ValueError):
        star_graph(n)


def test_adjacency_star3():
    np.testing.assert_array_equal(adjacency(star_graph(3)), [[1, 1, 1], [1, 0, 0], [1, 0, 0]])


def test_adjacency_empty():
    np.testing.assert_array_equal(adjacency(Graph.from_edges(3, [])), np.zeros((3, 3)))


def test_adjacency_symmetric_without_self_loops():
    g = Graph.from_edges(4, [(0, 1), (1, 0), (2, 3), (3, 2)])
    A = adjacency(g)
    np.testing.assert_array_equal(A, A.T)


def test_edge_out_of_range():
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 2)])


def test_mask_excludes_self():
    m = star_graph(3).mask(exclude_self=True)
    assert m[0].tolist() == [False, True, True]


@given(st.integers(2, 40))
def test_star_edge_count(n):
    assert adjacency(star_graph(n)).sum() == 2 * (n - 1) + 1


@given(st.integers(1, 6).flatmap(
    lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))))
))
def test_adjacency_round_trip(case):
    n, edges = case
    g = Graph.from_edges(n, edges)
    assert Graph.from_adjacency(adjacency(g)) == g
    for i in range(n):
        assert set(g.neighbors[i]) == {j for (k, j) in edges if k == i}
