import numpy as np
import pytest

from scgfm.errors import InsufficientClassError, UndefinedCorrelationError
from scgfm.evaluation import (Episode, analytic_pvalue, cka_linear, cosine_distance,
                              dominant_component, evaluate_few_shot, fisher_ratio,
                              isometry_study, pearson, permutation_pvalue, proto_classify,
                              sample_episodes)
from scgfm.bases import init_dictionary
from scgfm.decoder import init_decoder
from scgfm.graph import two_topology_corpus
from scgfm.trainer import Checkpoint, TrainConfig


def gaussian_classes(rng, sep=10.0, per=60, dim=4):
    z = np.concatenate([rng.normal(size=(per, dim)), rng.normal(size=(per, dim)) + sep])
    return z, np.r_[np.zeros(per, int), np.ones(per, int)]


class TestEpisodes:
    def test_minimal_counts(self):
        ep, = sample_episodes([0, 0, 1, 1], 2, k_shot=1, queries=1, runs=1)
        assert len(ep.support) == 2 and len(ep.query) == 2

    def test_disjoint_and_labelled(self, rng):
        labels = rng.integers(0, 4, 400)
        for ep in sample_episodes(labels, 3, 5, 10, 20, seed=1):
            assert not set(ep.support) & set(ep.query)
            assert np.array_equal(labels[ep.support], ep.support_labels)
            assert np.array_equal(labels[ep.query], ep.query_labels)
            assert len(set(ep.classes)) == 3

    def test_small_classes_excluded(self, caplog):
        labels = [0] * 60 + [1] * 60 + [2] * 3
        eps = sample_episodes(labels, 2, runs=5)
        assert all(2 not in e.classes for e in eps)
        assert "excluded" in caplog.text
        with pytest.raises(InsufficientClassError):
            sample_episodes(labels, 3)

    def test_deterministic(self):
        labels = [0] * 60 + [1] * 60
        a, b = sample_episodes(labels, 2, seed=3), sample_episodes(labels, 2, seed=3)
        assert all(np.array_equal(x.query, y.query) for x, y in zip(a, b))


class TestPrototypes:
    def episode(self, support, query):
        return Episode(2, 1, 1, np.array([0, 1]), np.array(support), np.array([0, 1]),
                       np.array(query), np.array([0, 0]), 0)

    def test_query_on_support_point(self):
        pool = np.array([[0.0, 0.0], [10.0, 10.0], [10.0, 10.0]])
        acc, pred = proto_classify(self.episode([0, 1], [2]), pool, standardize=False)
        assert pred.tolist() == [1]

    def test_tie_goes_to_lower_class(self):
        pool = np.array([[-1.0], [1.0], [0.0]])
        _, pred = proto_classify(self.episode([0, 1], [2]), pool, standardize=False)
        assert pred.tolist() == [0]

    def test_separated_gaussians(self, rng):
        z, y = gaussian_classes(rng)
        _, summary = evaluate_few_shot(z, y, 2, runs=50)
        assert summary["mean"] == 1.0 and summary["std"] == 0

    def test_orthogonal_invariance_without_standardization(self, rng):
        z, y = gaussian_classes(rng, sep=1.0)
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        r1, _ = evaluate_few_shot(z, y, 2, runs=10, standardize=False)
        r2, _ = evaluate_few_shot(z @ q, y, 2, runs=10, standardize=False)
        assert [r["accuracy"] for r in r1] == [r["accuracy"] for r in r2]


class TestSimilarity:
    def test_cka_identity_and_rotation(self, rng):
        x = rng.normal(size=(50, 6))
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        assert cka_linear(x, x) == pytest.approx(1)
        assert cka_linear(x, x @ q) == pytest.approx(1)

    def test_cka_independent(self, rng):
        assert cka_linear(rng.normal(size=(1000, 10)), rng.normal(size=(1000, 10))) < 0.1

    def test_pearson_cases(self, rng):
        x = rng.normal(size=100)
        assert pearson(x, 2 * x + 3) == pytest.approx(1)
        assert pearson(x, -x) == pytest.approx(-1)
        big = rng.normal(size=10_000)
        assert abs(pearson(big, rng.permutation(big))) < 0.05
        with pytest.raises(UndefinedCorrelationError):
            pearson(x, np.ones(100))

    def test_permutation_vs_analytic(self, rng):
        x = rng.normal(size=60)
        y = 0.5 * x + rng.normal(size=60)
        p_perm = permutation_pvalue(x, y, 10_000, 0)
        p_t = analytic_pvalue(x, y)
        assert p_perm >= 1 / 10_001
        assert abs(np.log10(max(p_perm, 1e-4)) - np.log10(max(p_t, 1e-4))) <= 1

    def test_permutation_null(self, rng):
        assert permutation_pvalue(rng.normal(size=50), rng.normal(size=50), 2000, 1) > 0.01

    def test_cosine(self):
        assert cosine_distance(np.array([1.0, 0]), np.array([2.0, 0])) == pytest.approx(0)
        assert cosine_distance(np.array([1.0, 0]), np.array([0, 3.0])) == pytest.approx(1)


class TestFisher:
    def test_identical_within_class(self):
        z = np.array([[0.0], [0.0], [1.0], [1.0]])
        assert fisher_ratio(z, [0, 0, 1, 1]) > 1e10

    def test_shuffled_labels(self, rng):
        z = rng.normal(size=(400, 5))
        assert fisher_ratio(z, rng.permutation(np.r_[np.zeros(200), np.ones(200)])) < 1

    def test_dominant(self, rng):
        k, r = 2, 3
        y = np.r_[np.zeros(50, int), np.ones(50, int)]
        coords = rng.normal(size=(100, k)) + 5 * y[:, None]
        rest = rng.normal(size=(100, r + 4))
        z = np.hstack([coords, rest])
        dom, ratios = dominant_component(z, y, k, r)
        assert dom == "coords" and ratios["coords"] > ratios["features"]

    def test_single_class(self):
        with pytest.raises(InsufficientClassError):
            fisher_ratio(np.ones((3, 2)), [0, 0, 0])


class TestIsometry:
    def test_identical_copies(self):
        g = two_topology_corpus(2, 0)
        graphs = [g[0], g[0], g[1]]
        ck = Checkpoint(TrainConfig(k=3, m_nodes=6), init_dictionary(3, 6, 0), init_decoder(3, 0))
        res = isometry_study(graphs, ck, pairs=20, seed=0, shuffles=200)
        same = [row for row, (i, j) in zip(res.table, res.pairs) if {i, j} == {0, 1}]
        assert same
        for gw, dist in same:
            assert dist == 0 and gw < 1e-3
        assert res.table.shape == (20, 2)
