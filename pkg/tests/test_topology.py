import itertools

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stegtrace.errors import InvalidParameterError
from stegtrace.topology import Topology, hop_distance, make_line, make_manhattan, shortest_path


def test_line_50():
    t = make_line(50)
    assert t.node_count == 50
    assert t.edge_count == 49


def test_line_smallest_and_five():
    assert make_line(2).sorted_edges() == [(0, 1)]
    assert make_line(5).sorted_edges() == [(0, 1), (1, 2), (2, 3), (3, 4)]


@pytest.mark.parametrize("n", [0, 1, -3])
def test_line_too_short(n):
    with pytest.raises(InvalidParameterError):
        make_line(n)


@pytest.mark.parametrize("w,h,nodes,edges", [(6, 6, 36, 60), (2, 2, 4, 4), (3, 2, 6, 7)])
def test_manhattan_counts(w, h, nodes, edges):
    t = make_manhattan(w, h)
    assert (t.node_count, t.edge_count) == (nodes, edges)


def test_manhattan_numbering():
    t = make_manhattan(3, 2)
    assert t.sorted_edges() == [(0, 1), (0, 3), (1, 2), (1, 4), (2, 5), (3, 4), (4, 5)]


@pytest.mark.parametrize("w,h", [(1, 5), (5, 1), (0, 0)])
def test_manhattan_too_small(w, h):
    with pytest.raises(InvalidParameterError):
        make_manhattan(w, h)


def test_from_edges_rejects_bad_graphs():
    with pytest.raises(InvalidParameterError):
        Topology.from_edges(3, [(0, 1), (1, 0)])
    with pytest.raises(InvalidParameterError):
        Topology.from_edges(3, [(0, 0), (1, 2)])
    with pytest.raises(InvalidParameterError, match="connected"):
        Topology.from_edges(4, [(0, 1), (2, 3)])


def test_line_route_is_ascending():
    assert shortest_path(make_line(50), 0, 49) == tuple(range(50))


def test_manhattan_corner_route():
    route = shortest_path(make_manhattan(6, 6), 0, 35)
    assert len(route) == 11


def test_manhattan_tie_break_0_to_7():
    t = make_manhattan(6, 6)
    # every 2-edge path from 0 to 7, found by enumeration
    two_hop = [(0, m, 7) for m in t.adjacency[0] if 7 in t.adjacency[m]]
    assert sorted(two_hop) == [(0, 1, 7), (0, 6, 7)]
    assert shortest_path(t, 0, 7) == min(two_hop) == (0, 1, 7)


def test_route_endpoints_must_differ():
    with pytest.raises(InvalidParameterError):
        shortest_path(make_line(4), 2, 2)


def test_hop_distance_examples():
    assert hop_distance(make_line(50), 0, 49) == 49
    assert hop_distance(make_manhattan(6, 6), 0, 35) == 10
    assert hop_distance(make_manhattan(6, 6), 17, 17) == 0


def test_invalid_node():
    with pytest.raises(InvalidParameterError):
        hop_distance(make_line(4), 0, 4)


def test_line_routes_are_contiguous():
    t = make_line(12)
    for i, j in itertools.combinations(range(12), 2):
        assert shortest_path(t, i, j) == tuple(range(i, j + 1))
        assert shortest_path(t, j, i) == tuple(range(j, i - 1, -1))


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 9))
    # random spanning tree plus extra edges keeps the graph connected
    edges = set()
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges.add((u, v))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=12))
    for a, b in extra:
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return Topology.from_edges(n, edges)


@settings(max_examples=80, deadline=None)
@given(connected_graphs(), st.data())
def test_route_matches_enumerated_shortest_paths(topo, data):
    src = data.draw(st.integers(0, topo.node_count - 1))
    dst = data.draw(st.integers(0, topo.node_count - 1))
    g = nx.Graph(topo.sorted_edges())
    assert hop_distance(topo, src, dst) == hop_distance(topo, dst, src) == nx.shortest_path_length(g, src, dst)
    if src == dst:
        return
    route = shortest_path(topo, src, dst)
    assert route == min(tuple(p) for p in nx.all_shortest_paths(g, src, dst))
    assert len(route) == hop_distance(topo, src, dst) + 1
    assert len(set(route)) == len(route)
    assert all(b in topo.adjacency[a] for a, b in zip(route, route[1:]))
    assert shortest_path(topo, src, dst) == route
