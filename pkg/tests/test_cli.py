import json

import numpy as np
import pytest

from scgfm.cli import build_parser, main
from scgfm.embed import read_embeddings, write_jsonl
from scgfm.graph import two_topology_corpus, write_json_graphs
from scgfm.trainer import Checkpoint

FAST = ["--k", "3", "--m-nodes", "6", "--batch-size", "4"]


@pytest.fixture
def toy(tmp_path):
    d = tmp_path / "toy"
    d.mkdir()
    write_json_graphs(two_topology_corpus(3, 0), d / "graphs.jsonl")
    return d


@pytest.fixture
def trained(tmp_path, toy):
    out = tmp_path / "ck.scgfm"
    assert main(["pretrain", "--data", str(toy), "--format", "json", "--out", str(out),
                 "--epochs", "1", *FAST]) == 0
    return out


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


class TestPretrain:
    def test_one_epoch(self, trained, capsys):
        ck = Checkpoint.load(trained)
        assert len(ck.log) == 1 and ck.config.k == 3

    def test_same_seed_same_bytes(self, tmp_path, toy, trained):
        again = tmp_path / "again.scgfm"
        main(["pretrain", "--data", str(toy), "--out", str(again), "--epochs", "1", *FAST])
        assert again.read_bytes() == trained.read_bytes()

    def test_metrics_stream(self, tmp_path, toy):
        m = tmp_path / "m.jsonl"
        main(["pretrain", "--data", str(toy), "--out", str(tmp_path / "c"), "--epochs", "2",
              "--metrics", str(m), *FAST])
        rows = [json.loads(x) for x in m.read_text().splitlines()]
        assert [r["epoch"] for r in rows] == [1, 2]

    def test_config_file_and_flag_precedence(self, tmp_path, toy):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 2, "m_nodes": 5, "epochs": 1, "seed": 7}))
        out = tmp_path / "c"
        assert main(["pretrain", "--data", str(toy), "--out", str(out), "--config", str(cfg),
                     "--k", "4"]) == 0
        c = Checkpoint.load(out).config
        assert (c.k, c.m_nodes, c.seed) == (4, 5, 7)

    def test_unknown_config_key(self, tmp_path, toy, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"bogus": 1}')
        assert main(["pretrain", "--data", str(toy), "--out", str(tmp_path / "c"),
                     "--config", str(cfg)]) != 0
        assert "bogus" in capsys.readouterr().err

    def test_threads_env(self, tmp_path, toy, monkeypatch):
        monkeypatch.setenv("SCGFM_THREADS", "2")
        out = tmp_path / "c"
        main(["pretrain", "--data", str(toy), "--out", str(out), "--epochs", "0", *FAST])
        assert Checkpoint.load(out).config.threads == 2
        main(["pretrain", "--data", str(toy), "--out", str(out), "--epochs", "0", "--threads",
              "3", *FAST])
        assert Checkpoint.load(out).config.threads == 3

    def test_missing_data(self, tmp_path):
        assert main(["pretrain", "--data", str(tmp_path / "nope"), "--out",
                     str(tmp_path / "c")]) != 0

    def test_unwritable_output(self, tmp_path, toy):
        assert main(["pretrain", "--data", str(toy), "--out",
                     str(tmp_path / "no" / "dir" / "c"), "--epochs", "0"]) != 0

    def test_help_lists_defaults(self):
        text = build_parser()._subparsers._group_actions[0].choices["pretrain"].format_help()
        for needle in ("default 16", "default 32", "default 0.01", "default 0.3", "default 2.0",
                       "default 0.05", "default 10.0", "default 60", "default 42"):
            assert needle in text


class TestEmbed:
    def test_records_and_formats(self, tmp_path, toy, trained, capsys):
        j, b = tmp_path / "e.jsonl", tmp_path / "e.bin"
        assert main(["embed", "--data", str(toy), "--checkpoint", str(trained),
                     "--out", str(j)]) == 0
        assert main(["embed", "--data", str(toy), "--checkpoint", str(trained),
                     "--out", str(b), "--format", "bin"]) == 0
        _, labels, zj = read_embeddings(j)
        _, _, zb = read_embeddings(b)
        assert zj.shape[0] == 3 and labels == [0, 1, 0]
        assert np.abs(zj - zb).max() <= 1e-15

    def test_missing_checkpoint(self, tmp_path, toy, capsys):
        assert main(["embed", "--data", str(toy), "--checkpoint", str(tmp_path / "x"),
                     "--out", str(tmp_path / "e")]) != 0
        assert "does not exist" in capsys.readouterr().err


class TestEval:
    def separable(self, tmp_path, rng):
        z = np.concatenate([rng.normal(size=(60, 3)), rng.normal(size=(60, 3)) + 10])
        path = tmp_path / "sep.jsonl"
        write_jsonl([(i, int(i >= 60), z[i]) for i in range(120)], path)
        return path

    def test_separable_accuracy(self, tmp_path, rng, capsys):
        path = self.separable(tmp_path, rng)
        out = tmp_path / "rows.jsonl"
        assert main(["eval", "--embeddings", str(path), "--out", str(out)]) == 0
        summary = last_json(capsys)
        assert summary["mean"] == 1.0 and summary["runs"] == 50
        rows = [json.loads(x) for x in out.read_text().splitlines()]
        assert len(rows) == 51 and rows[-1]["summary"]

    def test_deterministic(self, tmp_path, rng, capsys):
        path = tmp_path / "mixed.jsonl"
        write_jsonl([(i, i % 2, rng.normal(size=3)) for i in range(120)], path)
        main(["eval", "--embeddings", str(path), "--seed", "4"])
        a = last_json(capsys)
        main(["eval", "--embeddings", str(path), "--seed", "4"])
        assert last_json(capsys) == a

    def test_insufficient_classes(self, tmp_path, capsys):
        path = tmp_path / "few.jsonl"
        write_jsonl([(i, i % 2, np.ones(2)) for i in range(10)], path)
        assert main(["eval", "--embeddings", str(path)]) != 0
        assert "need 2 classes" in capsys.readouterr().err


class TestDiagnose:
    def test_bench_table(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        assert main(["diagnose", "bench", "--sizes", "100,200,400", "--repeats", "1",
                     "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 4

    def test_gradcheck_small(self, capsys):
        assert main(["diagnose", "gradcheck", "--k", "2", "--m-nodes", "4", "--seed", "0"]) == 0
        rep = last_json(capsys)
        assert rep["rec"] < 1e-4 and rep["div"] < 1e-4 and rep["passed"]

    def test_fisher_and_isometry(self, tmp_path, trained, capsys):
        emb = tmp_path / "e.jsonl"
        write_json_graphs(two_topology_corpus(12, 0), tmp_path / "g.jsonl")
        main(["embed", "--data", str(tmp_path / "g.jsonl"), "--checkpoint", str(trained),
              "--out", str(emb), "--solver", "sliced"])
        assert main(["diagnose", "fisher", "--embeddings", str(emb), "--k", "3"]) == 0
        assert last_json(capsys)["dominant"] in ("coords", "features")
        assert main(["diagnose", "isometry", "--checkpoint", str(trained), "--data",
                     str(tmp_path / "g.jsonl"), "--pairs", "10", "--solver", "sliced"]) == 0
        assert -1 <= last_json(capsys)["rho"] <= 1

    def test_sgw_corr_rewire_surrogate(self, tmp_path, trained, capsys):
        assert main(["diagnose", "sgw-corr", "--pairs", "8"]) == 0
        assert "rho" in last_json(capsys)
        assert main(["diagnose", "rewire", "--checkpoint", str(trained), "--count", "4",
                     "--solver", "sliced"]) == 0
        assert main(["diagnose", "surrogate", "--checkpoint", str(trained), "--synthetic", "3",
                     "--iterations", "2"]) == 0
        rep = last_json(capsys)
        assert rep["mean_surrogate_seconds"] < rep["mean_barycenter_seconds"]
