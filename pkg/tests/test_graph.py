"""Graph construction, edge-list parsing, and induced-subgraph behaviour.

Oracles used here:
  * degree counts on complete graphs and paths are known in closed form;
  * the bundled 115-node benchmark graph has 613 edges, hence mean degree
    2 * 613 / 115 = 10.6609 (within 0.01 of 10.66);
  * induced subgraphs must only keep edges whose endpoints both survive.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rumorloc import (
    OBS_NEGATIVE,
    OBS_POSITIVE,
    OBS_UNKNOWN,
    Graph,
    GraphFormatError,
    induced_positive_subgraph,
    load_edge_list,
)
from rumorloc.datasets import builtin_graph, write_edge_list

from conftest import random_connected_graph


class TestConstruction:
    def test_complete_graph_degrees(self) -> None:
        g = Graph.from_edges(4, [(i, j) for i in range(4) for j in range(i + 1, 4)])
        assert g.degrees.tolist() == [3, 3, 3, 3]

    def test_path_degrees(self, path4: Graph) -> None:
        assert path4.degrees.tolist() == [1, 2, 2, 1]

    def test_edges_are_canonical_and_deduped(self) -> None:
        g = Graph.from_edges(3, [(2, 1), (1, 2), (0, 1)])
        assert g.edges == ((0, 1), (1, 2))

    def test_self_loop_rejected(self) -> None:
        with pytest.raises(ValueError):
            Graph.from_edges(3, [(1, 1)])

    def test_endpoint_out_of_range_rejected(self) -> None:
        with pytest.raises(ValueError):
            Graph.from_edges(3, [(0, 3)])

    def test_adjacency_matrix_symmetric(self, triangle: Graph) -> None:
        a = triangle.adjacency_matrix()
        assert np.array_equal(a, a.T)
        assert a.sum() == 2 * len(triangle.edges)

    def test_hash_ignores_input_edge_order(self) -> None:
        g1 = Graph.from_edges(4, [(0, 1), (2, 3), (1, 2)])
        g2 = Graph.from_edges(4, [(3, 2), (1, 0), (1, 2)])
        assert g1.graph_hash == g2.graph_hash
        g3 = Graph.from_edges(4, [(0, 1), (2, 3)])
        assert g3.graph_hash != g1.graph_hash

    def test_connected_components(self) -> None:
        g = Graph.from_edges(6, [(0, 1), (1, 2), (3, 4), (4, 5)])
        comps = g.connected_components
        assert sorted(sorted(c) for c in comps) == [[0, 1, 2], [3, 4, 5]]


class TestNeighborhoods:
    def test_counts_match_degrees(self, star20: Graph) -> None:
        plain = star20.neighborhoods(include_self=False)
        assert plain.counts.tolist() == star20.degrees.tolist()
        withself = star20.neighborhoods(include_self=True)
        assert withself.counts.tolist() == (star20.degrees + 1).tolist()

    def test_flattened_pairs_sorted_by_target(self, path4: Graph) -> None:
        hoods = path4.neighborhoods(include_self=True)
        assert np.all(np.diff(hoods.tgt) >= 0)
        assert hoods.num_pairs == hoods.counts.sum()
        # Offsets partition the pair arrays contiguously.
        for node in range(path4.n):
            lo = hoods.offsets[node]
            hi = lo + hoods.counts[node]
            assert np.all(hoods.tgt[lo:hi] == node)
            assert node in hoods.src[lo:hi]


class TestEdgeListIO:
    def test_round_trip_benchmark_graph(self, football: Graph, tmp_path) -> None:
        path = tmp_path / "football.txt"
        write_edge_list(football, path)
        loaded, report = load_edge_list(path)
        assert loaded.n == 115
        assert len(loaded.edges) == 613
        assert loaded == football
        assert report.nodes == 115 and report.edges == 613
        mean_degree = 2 * len(loaded.edges) / loaded.n
        assert abs(mean_degree - 10.66) < 0.01

    def test_comments_duplicates_and_self_loops(self, tmp_path) -> None:
        path = tmp_path / "messy.txt"
        path.write_text(
            "# header comment\n"
            "% matrix-market style comment\n"
            "0 1\n"
            "1 0\n"
            "1 1\n"
            "\n"
            "1 2\n"
        )
        g, report = load_edge_list(path)
        assert g.edges == ((0, 1), (1, 2))
        assert report.self_loops_dropped == 1
        assert report.duplicates_dropped == 1
        assert report.comment_lines == 2

    def test_comma_delimiter(self, tmp_path) -> None:
        path = tmp_path / "csv_edges.txt"
        path.write_text("0,1\n1,2\n")
        g, _ = load_edge_list(path, delimiter=",")
        assert g.edges == ((0, 1), (1, 2))

    def test_malformed_line_raises(self, tmp_path) -> None:
        path = tmp_path / "bad.txt"
        path.write_text("0 1\n0 1 2\n")
        with pytest.raises(GraphFormatError):
            load_edge_list(path)

    def test_no_edges_raises(self, tmp_path) -> None:
        path = tmp_path / "empty.txt"
        path.write_text("# nothing but comments\n")
        with pytest.raises(GraphFormatError):
            load_edge_list(path)

    def test_numeric_label_ordering(self, tmp_path) -> None:
        path = tmp_path / "labels.txt"
        path.write_text("10 2\n2 1\n")
        g, _ = load_edge_list(path)
        assert g.labels == ("1", "2", "10")
        # Edge (2,1) becomes (ids of "1","2") = (0,1); (10,2) becomes (1,2).
        assert g.edges == ((0, 1), (1, 2))


class TestInducedSubgraph:
    def test_drop_one_triangle_node(self, triangle: Graph) -> None:
        states = np.array([OBS_POSITIVE, OBS_NEGATIVE, OBS_UNKNOWN])
        sub, mapping = induced_positive_subgraph(triangle, states)
        assert sub.n == 2
        assert sub.edges == ((0, 1),)
        assert mapping.to_original(0) == 0
        assert mapping.to_original(1) == 2
        assert mapping.to_subgraph(2) == 1
        assert not mapping.contains(1)

    def test_all_negative_raises(self, triangle: Graph) -> None:
        states = np.full(3, OBS_NEGATIVE)
        with pytest.raises(ValueError):
            induced_positive_subgraph(triangle, states)

    @settings(max_examples=60, deadline=None)
    @given(data=st.data(), n=st.integers(min_value=2, max_value=16))
    def test_kept_edges_exist_in_parent(self, data, n: int) -> None:
        seed = data.draw(st.integers(min_value=0, max_value=2**31))
        rng = np.random.default_rng(seed)
        g = random_connected_graph(n, int(rng.integers(0, n)), rng)
        states = data.draw(
            st.lists(
                st.sampled_from([OBS_POSITIVE, OBS_NEGATIVE, OBS_UNKNOWN]),
                min_size=n,
                max_size=n,
            )
        )
        states_arr = np.asarray(states, dtype=np.int64)
        if np.all(states_arr == OBS_NEGATIVE):
            states_arr[0] = OBS_UNKNOWN
        sub, mapping = induced_positive_subgraph(g, states_arr)
        kept = [i for i in range(n) if states_arr[i] != OBS_NEGATIVE]
        assert sub.n == len(kept)
        parent_edges = set(g.edges)
        for a, b in sub.edges:
            oa, ob = mapping.to_original(a), mapping.to_original(b)
            assert (min(oa, ob), max(oa, ob)) in parent_edges
        # Every parent edge between two kept nodes must survive.
        expected = sum(
            1
            for a, b in g.edges
            if states_arr[a] != OBS_NEGATIVE and states_arr[b] != OBS_NEGATIVE
        )
        assert len(sub.edges) == expected
