import gzip
import io

import numpy as np
import pytest

from graphgear.errors import GraphFormatError
from graphgear.graph import (Graph, RmatParams, build_stats, generate_rmat, in_neighbors, ingest_edge_list,
                             load_edge_list, neighbors, out_degree, required_scale, rmat_edges, write_edge_list)


def test_ingest_builds_forward_and_reverse_adjacency() -> None:
    graph = ingest_edge_list(io.StringIO("# comment\n0 1\n0 2\n2 1\n\n"))
    assert graph.vertex_count == 3
    assert graph.edge_count == 3
    assert out_degree(graph, 0) == 2
    assert sorted(neighbors(graph, 0).tolist()) == [1, 2]
    assert sorted(in_neighbors(graph, 1).tolist()) == [0, 2]
    assert in_neighbors(graph, 0).size == 0


def test_stats_gathered_at_construction() -> None:
    graph = ingest_edge_list(io.StringIO("0 1\n0 2\n0 3\n1 2\n"))
    stats = graph.stats
    assert stats.mean_out_degree == pytest.approx(1.0)
    assert stats.max_out_degree == 3
    # vertex 0 has no incoming edge
    assert stats.reachable_count == 3
    assert stats.degree_ratio == pytest.approx(3.0)


@pytest.mark.parametrize("text, line", [
    ("0 1\n0\n", 2),
    ("0 1\n1 2 3\n", 2),
    ("a b\n", 1),
    ("0 -1\n", 1),
    ("0 1\n\u00b2 1\n", 2),
])
def test_malformed_lines_report_line_number(text: str, line: int) -> None:
    with pytest.raises(GraphFormatError) as excinfo:
        ingest_edge_list(io.StringIO(text))
    assert excinfo.value.line_number == line
    assert f"line {line}" in str(excinfo.value)


def test_empty_edge_list_is_rejected() -> None:
    with pytest.raises(GraphFormatError):
        ingest_edge_list(io.StringIO("# only a comment\n"))


def test_vertex_out_of_range_raises(path_graph) -> None:
    with pytest.raises(IndexError):
        path_graph.neighbors(3)
    with pytest.raises(IndexError):
        path_graph.out_degree(-1)


def test_topology_is_read_only(path_graph) -> None:
    with pytest.raises(ValueError):
        path_graph.targets[0] = 2


def test_transpose_swaps_directions(path_graph) -> None:
    reverse = path_graph.transpose()
    assert reverse.neighbors(2).tolist() == [1]
    assert reverse.in_neighbors(0).tolist() == [1]


def test_edge_list_file_roundtrip_and_gzip(tmp_path, rmat_graph) -> None:
    path = tmp_path / "graph.el"
    write_edge_list(rmat_graph, path, comment="rmat test")
    loaded = load_edge_list(path)
    assert loaded.edge_count == rmat_graph.edge_count
    np.testing.assert_array_equal(loaded.out_degrees()[:loaded.vertex_count],
                                  rmat_graph.out_degrees()[:loaded.vertex_count])

    gz_path = tmp_path / "graph.el.gz"
    with gzip.open(gz_path, "wt", encoding="utf-8") as f:
        f.write(path.read_text())
    assert load_edge_list(gz_path).edge_count == rmat_graph.edge_count


def test_rmat_is_deterministic_and_skewed() -> None:
    params = RmatParams(scale=12, edge_factor=16, seed=7)
    first = rmat_edges(params)
    second = rmat_edges(params)
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])
    graph = generate_rmat(params)
    assert graph.vertex_count == 4096
    assert graph.edge_count == 16 * 4096
    assert graph.stats.degree_ratio > 1.1


def test_rmat_probabilities_must_sum_to_one() -> None:
    with pytest.raises(ValueError):
        RmatParams(scale=4, a=0.5, b=0.5, c=0.5, d=0.0)


def test_rmat_overflow_is_reported() -> None:
    with pytest.raises(OverflowError):
        rmat_edges(RmatParams(scale=63))


def test_required_scale() -> None:
    assert required_scale(1024) == 10
    assert required_scale(1025) == 11
    assert required_scale(1) == 1


def test_from_edges_rejects_out_of_range_endpoint() -> None:
    with pytest.raises(ValueError):
        Graph.from_edges([0, 5], [1, 2], vertex_count=3)


def _edge_multiset(graph: Graph) -> list[tuple[int, int]]:
    sources, targets = graph.edges()
    return sorted(zip(sources.tolist(), targets.tolist()))


@pytest.mark.parametrize("sources, targets, vertex_count, mean, max_degree, reachable", [
    ([0, 1], [1, 2], 3, 2 / 3, 1, 2),
    ([], [], 3, 0.0, 0, 0),
    ([0, 0, 1, 1, 2, 2], [1, 2, 0, 2, 0, 1], 3, 2.0, 2, 3),
])
def test_build_stats_hand_counts(sources, targets, vertex_count, mean, max_degree, reachable) -> None:
    stats = build_stats(Graph.from_edges(sources, targets, vertex_count=vertex_count))
    assert stats.mean_out_degree == pytest.approx(mean)
    assert stats.max_out_degree == max_degree
    assert stats.reachable_count == reachable


def test_isolated_vertex_has_no_neighbors() -> None:
    graph = Graph.from_edges([0], [1], vertex_count=3)
    assert out_degree(graph, 2) == 0
    assert neighbors(graph, 2).size == 0
    assert in_neighbors(graph, 2).size == 0


def test_stats_match_brute_force_on_random_edge_lists() -> None:
    rng = np.random.default_rng(17)
    for _ in range(100):
        ids = int(rng.integers(1, 30))
        edges = [(int(s), int(t)) for s, t in rng.integers(0, ids, size=(int(rng.integers(1, 60)), 2))]
        graph = ingest_edge_list(io.StringIO("".join(f"{s} {t}\n" for s, t in edges)))
        vertex_count = 1 + max(max(s, t) for s, t in edges)
        degrees = [sum(1 for s, _ in edges if s == v) for v in range(vertex_count)]
        stats = graph.stats
        assert stats.vertex_count == vertex_count
        assert stats.edge_count == len(edges)
        assert stats.mean_out_degree == pytest.approx(len(edges) / vertex_count)
        assert stats.max_out_degree == max(degrees)
        assert stats.reachable_count == len({t for _, t in edges})
        assert stats == build_stats(graph)


def test_out_degrees_sum_to_edge_count(rmat_graph, star_graph, two_cycle) -> None:
    for graph in (rmat_graph, star_graph, two_cycle):
        assert int(graph.out_degrees().sum()) == graph.edge_count
        assert int(graph.in_degrees().sum()) == graph.edge_count
        assert sum(out_degree(graph, v) for v in range(graph.vertex_count)) == graph.edge_count


def test_transpose_twice_reproduces_edges(rmat_graph) -> None:
    twice = rmat_graph.transpose().transpose()
    assert _edge_multiset(twice) == _edge_multiset(rmat_graph)
    reversed_edges = sorted((t, s) for s, t in _edge_multiset(rmat_graph))
    assert _edge_multiset(rmat_graph.transpose()) == reversed_edges
