import json

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import complete, graphs, path, star
from scgfm.errors import EmptyGraphError, IntegrityError, ParseError
from scgfm.graph import (Graph, MmSpace, generate_er, generate_sparse_er, load_json_graphs,
                         load_tu_dataset, ppr_scores, ppr_subgraph, rewire, to_mm_space,
                         two_topology_corpus, write_json_graphs, write_tu_dataset)


class TestGraph:
    def test_edges_are_canonical(self):
        g = Graph(3, [(2, 1), (1, 0)])
        assert g.edges.tolist() == [[0, 1], [1, 2]]
        assert g == Graph(3, [(0, 1), (1, 2)]) or np.array_equal(g.edges, [[0, 1], [1, 2]])

    @pytest.mark.parametrize("edges", [[(0, 0)], [(0, 1), (1, 0)], [(0, 3)], [(-1, 0)]])
    def test_rejects_bad_edges(self, edges):
        with pytest.raises(IntegrityError):
            Graph(3, edges)

    def test_feature_rows_checked(self):
        with pytest.raises(IntegrityError):
            Graph(3, [(0, 1)], np.zeros((2, 4)))

    def test_permute_preserves_degrees_multiset(self, rng):
        g = generate_er(9, 0.4, 3)
        h = g.permute(rng.permutation(9))
        assert sorted(g.degrees()) == sorted(h.degrees())
        assert h.edge_count == g.edge_count


class TestMeasure:
    def test_path(self):
        np.testing.assert_allclose(to_mm_space(path(3)).measure, [0.25, 0.5, 0.25])

    def test_triangle(self):
        np.testing.assert_allclose(to_mm_space(complete(3)).measure, [1 / 3] * 3)

    def test_star(self):
        np.testing.assert_allclose(to_mm_space(star(3)).measure, [0.5, 1 / 6, 1 / 6, 1 / 6])

    def test_edgeless_is_uniform(self):
        a = to_mm_space(Graph(3, []))
        np.testing.assert_allclose(a.measure, [1 / 3] * 3)
        assert not a.dense().any()

    def test_isolated_nodes_dropped(self):
        a = to_mm_space(Graph(4, [(0, 2)]))
        assert a.support.tolist() == [0, 2]
        np.testing.assert_allclose(a.measure, [0.5, 0.5])

    def test_empty_graph_rejected(self):
        with pytest.raises(EmptyGraphError):
            to_mm_space(Graph(0, []))

    def test_sparse_matches_dense(self):
        g = generate_er(12, 0.3, 0)
        s, d = to_mm_space(g, sparse=True), to_mm_space(g, sparse=False)
        assert s.is_sparse and not d.is_sparse
        np.testing.assert_array_equal(s.dense(), d.dense())

    @given(graphs(min_nodes=1, max_nodes=10))
    def test_measure_is_probability(self, g):
        a = to_mm_space(g)
        assert abs(a.measure.sum() - 1) < 1e-12 and a.measure.min() > 0
        np.testing.assert_array_equal(a.dense(), a.dense().T)

    def test_mm_space_validation(self):
        with pytest.raises(IntegrityError):
            MmSpace(np.zeros((2, 2)), np.array([0.3, 0.3]))
        with pytest.raises(IntegrityError):
            MmSpace(np.zeros((3, 3)), np.array([0.5, 0.5]))


class TestIo:
    def test_json_toy(self, tmp_path):
        f = tmp_path / "g.jsonl"
        f.write_text('{"n":3,"edges":[[0,1],[1,2]]}\n\n{"n":2,"edges":[[0,1]],"label":1}\n')
        gs = load_json_graphs(f)
        assert [g.node_count for g in gs] == [3, 2]
        assert gs[0].edges.tolist() == [[0, 1], [1, 2]] and gs[1].label == 1

    @pytest.mark.parametrize("line,err", [
        ('{"n":3,"edges":[[0,0]]}', IntegrityError),
        ('{"n":3,"edges":[[0,1]],"features":[[1],[2]]}', IntegrityError),
        ('{"n":3}', ParseError),
        ('{"n":3,"edges":[[0,1]', ParseError),
        ('{"n":"3","edges":[]}', ParseError),
    ])
    def test_json_errors(self, tmp_path, line, err):
        f = tmp_path / "bad.jsonl"
        f.write_text(line + "\n")
        with pytest.raises(err):
            load_json_graphs(f)

    def test_json_round_trip(self, tmp_path):
        gs = two_topology_corpus(6, 0)
        gs[0] = Graph(gs[0].node_count, gs[0].edges, np.arange(gs[0].node_count * 2.0).reshape(-1, 2),
                      0, "a")
        write_json_graphs(gs, tmp_path / "x.jsonl")
        back = load_json_graphs(tmp_path / "x.jsonl")
        for g, h in zip(gs, back):
            assert np.array_equal(g.edges, h.edges) and g.label == h.label
        np.testing.assert_array_equal(back[0].features, gs[0].features)

    def test_tu_round_trip(self, tmp_path):
        gs = [Graph(3, [(0, 1), (1, 2)], None, 0), Graph(2, [(0, 1)], None, 1)]
        write_tu_dataset(gs, tmp_path, "TOY")
        back = load_tu_dataset(tmp_path)
        assert [g.node_count for g in back] == [3, 2]
        assert [g.label for g in back] == [0, 1]
        assert back[0].edges.tolist() == [[0, 1], [1, 2]]

    def test_tu_node_labels_become_one_hot(self, tmp_path):
        (tmp_path / "T_A.txt").write_text("1, 2\n2, 1\n2, 3\n3, 2\n")
        (tmp_path / "T_graph_indicator.txt").write_text("1\n1\n1\n")
        (tmp_path / "T_graph_labels.txt").write_text("1\n")
        (tmp_path / "T_node_labels.txt").write_text("0\n2\n0\n")
        g, = load_tu_dataset(tmp_path)
        assert g.features.shape == (3, 2)
        np.testing.assert_array_equal(g.features.sum(axis=1), 1)


class TestGenerators:
    def test_er_extremes(self):
        assert generate_er(5, 0.0, 1).edge_count == 0
        assert generate_er(4, 1.0, 1).edge_count == 6

    def test_er_deterministic(self):
        assert np.array_equal(generate_er(10, 0.3, 7).edges, generate_er(10, 0.3, 7).edges)

    def test_sparse_er_degree(self):
        g = generate_sparse_er(2000, 6.0, 0)
        assert abs(2 * g.edge_count / 2000 - 6.0) < 0.5

    def test_two_topology_corpus(self):
        gs = two_topology_corpus(10, 3)
        assert [g.label for g in gs] == [0, 1] * 5
        assert all(10 <= g.node_count <= 20 for g in gs)


class TestPpr:
    def test_scores_match_dense_solve(self):
        g = generate_er(30, 0.2, 5)
        a = g.adjacency().astype(float)
        deg = a.sum(axis=0)
        assert deg.min() > 0
        W = a / deg
        e = np.zeros(30)
        e[4] = 1.0
        exact = np.linalg.solve(np.eye(30) - 0.85 * W, 0.15 * e)
        np.testing.assert_allclose(ppr_scores(g, 4, 0.15, 200), exact, atol=1e-10)

    def test_star_smaller_than_cap(self):
        sub = ppr_subgraph(star(3), 0, cap=100)
        assert sub.node_count == 4 and sub.edge_count == 3

    def test_path_contiguous_window(self):
        g = path(200)
        center = 120
        sub_nodes_count = ppr_subgraph(g, center, cap=100).node_count
        assert sub_nodes_count == 100
        # the exact PPR ranking of a path is by distance from the center
        a = g.adjacency().astype(float)
        W = a / a.sum(axis=0)
        e = np.zeros(200)
        e[center] = 1.0
        exact = np.linalg.solve(np.eye(200) - 0.85 * W, 0.15 * e)
        others = np.delete(np.arange(200), center)
        top = np.sort(np.r_[center, others[np.lexsort((others, -exact[others]))][:99]])
        assert np.all(np.diff(top) == 1) and center in top
        sub = ppr_subgraph(g, center, cap=100)
        assert sub.edge_count == 99  # an induced path on 100 consecutive nodes

    @given(graphs(min_nodes=2, max_nodes=12))
    @settings(max_examples=30)
    def test_center_included(self, g):
        sub = ppr_subgraph(g, 0, cap=3)
        assert sub.node_count == min(3, g.node_count)


class TestRewire:
    def test_zero_is_identity(self):
        g = generate_er(10, 0.3, 2)
        assert np.array_equal(rewire(g, 0.0, 1).edges, g.edges)

    def test_full_moves_path_edges(self):
        g = path(3)
        h = rewire(g, 1.0, 0)
        assert h.edge_count == 2

    def test_full_on_sparse_graph_changes_topology(self):
        g = path(30)
        assert rewire(g, 1.0, 0).edge_set() != g.edge_set()

    @given(graphs(max_nodes=9))
    @settings(max_examples=40)
    def test_edge_count_preserved(self, g):
        for eps in (0.3, 1.0):
            assert rewire(g, eps, 3).edge_count == g.edge_count

    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            rewire(path(3), 1.5, 0)
