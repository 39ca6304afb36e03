import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.sparse.csgraph import floyd_warshall
from scipy.sparse import csr_matrix

from jordan_source.graph import (EdgeListError, Graph, GraphError, LazyTree, bfs_distances, grid_graph,
                                 hop_distances, infection_range, load_edge_list, minimal_connected_subgraph,
                                 parse_edge_list, path_graph, random_connected_graph, random_tree, star_graph,
                                 subtree_away_from, write_edge_list)

from conftest import labelled_path


def to_nx(g: Graph) -> nx.Graph:
    h = nx.Graph()
    h.add_nodes_from(range(g.node_count))
    h.add_edges_from(g.edges())
    return h


@st.composite
def graphs(draw, max_n=30, tree=False):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    if tree:
        return random_tree(n, rng)
    return random_connected_graph(n, draw(st.integers(0, 2 * n)), rng)


# ------------------------------------------------------------------ construction / parsing


def test_parse_numeric_labels():
    g, stats = parse_edge_list("0 1\n1 2")
    assert (g.node_count, g.edge_count) == (3, 2)
    assert stats.duplicates == 0


def test_parse_drops_duplicate_and_comment():
    g, stats = parse_edge_list("a b\nb a\n# c")
    assert (g.node_count, g.edge_count, stats.duplicates) == (2, 1, 1)
    assert g.label(0) == "a" and g.node("b") == 1


def test_parse_self_loop_and_blank():
    g, stats = parse_edge_list(b"\n1 1\n1 2\n\n")
    assert stats.self_loops == 1 and g.edge_count == 1


def test_parse_malformed_line_reports_line_number():
    with pytest.raises(EdgeListError) as ei:
        parse_edge_list("a b\nc\n")
    assert ei.value.lineno == 2


def test_parse_empty_is_error():
    with pytest.raises(GraphError):
        parse_edge_list("# nothing\n")


def test_write_then_load_round_trip(tmp_path):
    g = random_connected_graph(40, 30, 3)
    p = tmp_path / "g.txt"
    p.write_text(write_edge_list(g))
    h = load_edge_list(p)
    got = sorted(tuple(sorted((int(h.label(a)), int(h.label(b))))) for a, b in h.edges())
    assert got == sorted(g.edges())


def test_from_edges_rejects_bad_input():
    with pytest.raises(GraphError):
        Graph.from_edges(2, [(0, 0)])
    with pytest.raises(GraphError):
        Graph.from_edges(2, [(0, 2)])


def test_unknown_label():
    g = labelled_path()
    with pytest.raises(GraphError):
        g.node("zz")


# ------------------------------------------------------------------ distances


def test_path_distances(path5):
    g = labelled_path("abc")
    d = hop_distances(g, [g.node("a")])
    assert d.tolist() == [0, 1, 2]


def test_disconnected_is_infinite():
    g = Graph.from_edges(2, [])
    assert bfs_distances(g, 0)[1] == np.inf
    assert hop_distances(g, [0])[1] == -1


@given(graphs(max_n=50))
def test_bfs_matches_floyd_warshall(g):
    n = g.node_count
    s, d = g.edge_arrays()
    fw = floyd_warshall(csr_matrix((np.ones(s.size), (s, d)), shape=(n, n)), unweighted=True)
    for u in range(min(n, 5)):
        np.testing.assert_array_equal(bfs_distances(g, u), fw[u])


def test_infection_range_examples(path5):
    g = path5
    a, c, e = g.node("a"), g.node("c"), g.node("e")
    assert infection_range(g, [c], [c]) == 0
    assert infection_range(g, [a], [a, e]) == 4
    assert infection_range(g, [a, e], [a, c, e]) == 2


@given(graphs(max_n=30), st.data())
def test_infection_range_matches_brute_force(g, data):
    n = g.node_count
    s = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=3, unique=True))
    vi = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=8, unique=True))
    full = dict(nx.all_pairs_shortest_path_length(to_nx(g)))
    expect = max(min(full[x][i] for x in s) for i in vi)
    assert infection_range(g, s, vi) == expect


def test_infection_range_unreachable():
    g = Graph.from_edges(3, [(0, 1)])
    with pytest.raises(GraphError):
        infection_range(g, [0], [2])


# ------------------------------------------------------------------ connecting subgraphs


def test_two_leaves_give_unique_path():
    g = Graph.from_edges(6, [(0, 1), (1, 2), (2, 3), (1, 4), (4, 5)])
    h = minimal_connected_subgraph(g, [3, 5])
    assert h.nodes.tolist() == [1, 2, 3, 4, 5]


def test_single_node_subgraph():
    h = minimal_connected_subgraph(path_graph(4), [2])
    assert h.nodes.tolist() == [2] and h.graph.edge_count == 0


@given(graphs(max_n=40, tree=True), st.data())
def test_tree_subgraph_is_union_of_paths(g, data):
    n = g.node_count
    nodes = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=6, unique=True))
    t = to_nx(g)
    expect = set(nodes)
    for a, b in itertools.combinations(nodes, 2):
        expect |= set(nx.shortest_path(t, a, b))
    assert set(minimal_connected_subgraph(g, nodes).nodes.tolist()) == expect


def _exhaustive_steiner_edges(g: Graph, terminals) -> int:
    # smallest connected node set containing the terminals, by increasing size
    others = [u for u in range(g.node_count) if u not in terminals]
    t = to_nx(g)
    for extra in range(len(others) + 1):
        for add in itertools.combinations(others, extra):
            sub = t.subgraph(list(terminals) + list(add))
            if nx.is_connected(sub):
                return len(terminals) + extra - 1
    raise AssertionError


def test_grid_corners_heuristic_bound():
    g = grid_graph(4, 4)
    corners = [0, 3, 12]
    h = minimal_connected_subgraph(g, corners)
    tree_edges = len(h.tree_edges)
    pair_sum = sum(nx.shortest_path_length(to_nx(g), a, b) for a, b in itertools.combinations(corners, 2))
    assert nx.is_connected(to_nx(h.graph))
    assert set(corners) <= set(h.nodes.tolist())
    assert tree_edges <= pair_sum
    assert tree_edges >= _exhaustive_steiner_edges(g, corners)


def test_subtree_away_from_examples():
    g = labelled_path("abc")
    assert subtree_away_from(g, g.node("a"), g.node("c")).tolist() == [g.node("a")]
    s = star_graph(3)  # hub 0
    assert subtree_away_from(s, 1, 0).tolist() == [1]


@given(graphs(max_n=10, tree=True), st.data())
def test_subtree_away_from_partitions(g, data):
    if g.node_count < 2:
        return
    u, v = data.draw(st.lists(st.integers(0, g.node_count - 1), min_size=2, max_size=2, unique=True))
    side = set(subtree_away_from(g, u, v).tolist())
    other = set(subtree_away_from(g, v, u).tolist())
    assert u in side and v in other
    # cutting one edge of a tree leaves exactly two components
    t = to_nx(g)
    p = nx.shortest_path(t, u, v)
    t.remove_edge(p[0], p[1])
    assert side == nx.node_connected_component(t, u)
    assert side.isdisjoint(other)
    assert side | set(nx.node_connected_component(t, p[1])) == set(range(g.node_count))


# ------------------------------------------------------------------ lazy trees


def test_lazy_root_fixed_degree():
    t = LazyTree(3, 3, seed=1)
    assert len(t.expand(0)) == 3


def test_lazy_child_counts():
    t = LazyTree(3, 5, seed=2)
    kids = t.expand(0)
    for c in kids:
        assert len(t.expand(c)) in (2, 3, 4)


def test_lazy_determinism():
    a, b = LazyTree(3, 5, seed=7), LazyTree(3, 5, seed=7)
    a.expand_within(3)
    b.expand_within(3)
    assert a.freeze().edges() == b.freeze().edges()


@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.sampled_from([(2, 3), (3, 3), (3, 5)]))
def test_lazy_degrees_within_radius(seed, r, bounds):
    t = LazyTree(*bounds, seed=seed)
    t.expand_within(r)
    g = t.freeze()
    assert g.is_tree()
    for u, d in enumerate(t.depth):
        if d < r:
            assert bounds[0] <= g.degree(u) <= bounds[1]
