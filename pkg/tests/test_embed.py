import numpy as np
import pytest

from conftest import cycle
from scgfm.bases import CoordinateResult, init_dictionary
from scgfm.decoder import init_decoder
from scgfm.embed import (Embedding, embed_graph, embedding_matrix, project_features,
                         read_bin, read_embeddings, read_jsonl, write_bin, write_jsonl)
from scgfm.errors import IntegrityError, ParseError
from scgfm.graph import Graph, generate_er
from scgfm.ot import Coupling
from scgfm.trainer import Checkpoint, TrainConfig


def checkpoint(k=3, m=6):
    return Checkpoint(TrainConfig(k=k, m_nodes=m), init_dictionary(k, m, 0), init_decoder(k, 0))


def coords_with(plans, weights):
    return CoordinateResult(np.asarray(weights, float), np.zeros(len(weights)),
                            [Coupling(t, t.sum(1), t.sum(0)) for t in plans])


class TestProjection:
    def test_identity_coupling_returns_features(self, rng):
        X = rng.normal(size=(5, 3))
        g = Graph(5, [(0, 1)], X)
        H = project_features(g, coords_with([np.eye(5) / 5], [1.0]), 5)
        np.testing.assert_allclose(H, X, atol=1e-15)

    def test_zero_features(self, rng):
        g = Graph(5, [(0, 1)], np.zeros((5, 2)))
        t = rng.random((5, 4))
        H = project_features(g, coords_with([t / t.sum()], [1.0]), 4)
        assert not H.any()

    def test_mass_conservation(self, rng):
        X = rng.normal(size=(5, 3))
        g = Graph(5, [(0, 1)], X)
        # uniform rows: N * sum_m T^T X = sum_i X_i
        plans = []
        for _ in range(2):
            t = rng.random((5, 4))
            t = t / t.sum(axis=1, keepdims=True) / 5
            plans.append(t)
        H = project_features(g, coords_with(plans, [0.3, 0.7]), 4)
        np.testing.assert_allclose(H.sum(axis=0), X.sum(axis=0), atol=1e-12)

    def test_shape_mismatch(self):
        g = Graph(4, [(0, 1)])
        with pytest.raises(IntegrityError):
            project_features(g, coords_with([np.ones((3, 2)) / 6], [1.0]), 2)


class TestEmbedGraph:
    def test_layout_length(self):
        e = Embedding(np.zeros(16), np.zeros(19), np.zeros((32, 1433)))
        assert len(e) == e.vector.size == 45891

    def test_isomorphic_graphs_exact_solver(self, rng):
        ck = checkpoint(3, 6)
        g = cycle(6)
        h = g.permute(rng.permutation(6))
        eg, eh = embed_graph(g, ck, "exact"), embed_graph(h, ck, "exact")
        np.testing.assert_array_equal(eg.coords, eh.coords)
        np.testing.assert_array_equal(eg.decoded, eh.decoded)

    @pytest.mark.parametrize("solver", ["entropic", "sliced"])
    def test_deterministic(self, solver):
        ck = checkpoint()
        g = generate_er(9, 0.4, 1)
        assert np.array_equal(embed_graph(g, ck, solver).vector, embed_graph(g, ck, solver).vector)

    def test_isolated_nodes_use_support(self):
        g = Graph(6, [(0, 1), (1, 2), (2, 0), (3, 4)], np.arange(12.0).reshape(6, 2))
        e = embed_graph(g, checkpoint(), "sliced")
        assert e.features.shape == (6, 2)
        assert e.coords.sum() == pytest.approx(1)


class TestExport:
    def records(self, rng):
        return [(i, i % 2, rng.normal(size=7)) for i in range(4)]

    def test_jsonl_and_bin_agree(self, tmp_path, rng):
        recs = self.records(rng)
        write_jsonl(recs, tmp_path / "e.jsonl")
        write_bin(recs, tmp_path / "e.bin")
        ids_j, lab_j, zj = read_embeddings(tmp_path / "e.jsonl")
        ids_b, lab_b, zb = read_embeddings(tmp_path / "e.bin")
        assert ids_j == ids_b == [0, 1, 2, 3] and lab_j == lab_b == [0, 1, 0, 1]
        np.testing.assert_array_equal(zj, zb)
        np.testing.assert_array_equal(zb, np.stack([r[2] for r in recs]))

    def test_bad_files(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"SCGFM-EMB 1 2 3\n{}\n" + b"\0" * 8)
        with pytest.raises(ParseError):
            read_bin(tmp_path / "x.bin")
        (tmp_path / "x.jsonl").write_text('{"graph_id": 0, "z": [1]}\n{"graph_id": 1}\n')
        with pytest.raises(ParseError):
            read_jsonl(tmp_path / "x.jsonl")

    def test_matrix(self):
        e = Embedding(np.ones(2), np.zeros(3), np.ones((2, 2)))
        assert embedding_matrix([e, e]).shape == (2, 9)
