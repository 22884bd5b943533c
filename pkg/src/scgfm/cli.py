"""Command-line interface: ``scgfm <command> [options]``.

Commands
--------
pretrain   train a dictionary and decoder, write a checkpoint
embed      embed a dataset with a frozen checkpoint
eval       few-shot prototypical evaluation of an embedding file
diagnose   isometry | sgw-corr | surrogate | rewire | fisher | gradcheck | bench

Options may also come from a JSON config file (``--config``); flags given on
the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .errors import ScgfmError
from .graph import load_json_graphs, load_tu_dataset, to_mm_space, two_topology_corpus
from .trainer import Checkpoint, TrainConfig

log = logging.getLogger("scgfm")

TRAIN_FLAGS = {f.name: f for f in fields(TrainConfig)}


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("SCGFM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise CliError(f"SCGFM_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise CliError("SCGFM_THREADS must be >= 1")
        return n
    return 1


def _load_graphs(path, fmt: str = "auto"):
    """Graphs from a JSON-lines file, a directory of them, or a TU directory."""
    path = Path(path)
    if not path.exists():
        raise CliError(f"data path {path} does not exist")
    if fmt == "auto":
        fmt = "tu" if path.is_dir() and any(path.glob("*_A.txt")) else "json"
    if fmt == "tu":
        return load_tu_dataset(path)
    if fmt != "json":
        raise CliError(f"unknown format {fmt!r}")
    if not path.is_dir():
        return load_json_graphs(path)
    files = sorted(p for p in path.iterdir() if p.suffix in (".json", ".jsonl"))
    if not files:
        raise CliError(f"no .json or .jsonl files in {path}")
    return [g for f in files for g in load_json_graphs(f)]


def _graphs_arg(args):
    """Graphs from ``--data`` or, without it, the seeded two-topology corpus."""
    if args.data:
        return _load_graphs(args.data, args.data_format)
    return two_topology_corpus(args.synthetic, args.seed)


def _check_writable(path) -> Path:
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.exists():
        raise CliError(f"output directory {parent} does not exist")
    return path


def _load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("config file must hold a JSON object")
    unknown = set(cfg) - set(TRAIN_FLAGS)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _train_config(args) -> TrainConfig:
    values = _load_config(args.config) if getattr(args, "config", None) else {}
    for name in TRAIN_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if getattr(args, "threads", None) or os.environ.get("SCGFM_THREADS") or "threads" not in values:
        values["threads"] = _threads(args)
    try:
        return TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid training config: {exc}") from exc


def _load_checkpoint(path) -> Checkpoint:
    if not Path(path).exists():
        raise CliError(f"checkpoint {path} does not exist")
    return Checkpoint.load(path)


def _write_jsonl(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")


def _write_csv(header, rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _solver_options(args) -> dict:
    opts = {}
    if getattr(args, "restarts", None) is not None:
        opts["restarts"] = args.restarts
    return opts


# ---------------------------------------------------------------------------
# commands


def cmd_pretrain(args) -> int:
    from .trainer import pretrain

    cfg = _train_config(args)
    out = _check_writable(args.out)
    graphs = _load_graphs(args.data, args.data_format)
    metrics_fh = open(args.metrics, "w", encoding="utf-8") if args.metrics else None

    def emit(rec):
        line = json.dumps(rec)
        if metrics_fh:
            metrics_fh.write(line + "\n")
            metrics_fh.flush()
        log.info("epoch %d total %.6f", rec["epoch"], rec["total"])

    try:
        ckpt = pretrain(graphs, cfg, metrics=emit)
    finally:
        if metrics_fh:
            metrics_fh.close()
    ckpt.save(out)
    last = ckpt.log[-1] if ckpt.log else None
    summary = {"checkpoint": str(out), "graphs": len(graphs), "epochs": cfg.epochs,
               "final": last}
    print(json.dumps(summary))
    return 0


def cmd_embed(args) -> int:
    from .embed import embed_graph, write_bin, write_jsonl

    ckpt = _load_checkpoint(args.checkpoint)
    out = _check_writable(args.out)
    graphs = _load_graphs(args.data, args.data_format)
    records = []
    for g in graphs:
        e = embed_graph(g, ckpt, args.solver, **_solver_options(args))
        records.append((g.graph_id, g.label, e.vector))
    dims = {r[2].size for r in records}
    if len(dims) > 1:
        raise CliError(f"graphs have different feature widths (embedding lengths {sorted(dims)})")
    if args.format == "bin":
        write_bin(records, out)
    else:
        write_jsonl(records, out)
    print(json.dumps({"embeddings": str(out), "records": len(records),
                      "dim": dims.pop() if dims else 0}))
    return 0


def cmd_eval(args) -> int:
    from .embed import read_embeddings
    from .evaluation import evaluate_few_shot

    if not Path(args.embeddings).exists():
        raise CliError(f"embedding file {args.embeddings} does not exist")
    _, labels, Z = read_embeddings(args.embeddings)
    if any(l is None for l in labels):
        raise CliError("every embedding record needs a label for evaluation")
    rows, summary = evaluate_few_shot(Z, labels, args.n_way, args.shots, args.queries, args.runs,
                                      args.seed, not args.no_standardize)
    dataset = args.dataset or Path(args.embeddings).stem
    rows = [{"task": "few-shot", "dataset": dataset, **r} for r in rows]
    summary = {"task": "few-shot", "dataset": dataset, "summary": True, **summary}
    if args.out:
        _write_jsonl(rows + [summary], _check_writable(args.out))
    print(json.dumps(summary))
    return 0


def diag_isometry(args) -> int:
    from .evaluation import isometry_study

    ckpt = _load_checkpoint(args.checkpoint)
    graphs = _graphs_arg(args)
    res = isometry_study(graphs, ckpt, args.pairs, args.seed, args.solver,
                         **_solver_options(args))
    if args.out:
        _write_csv(["gw_distance", "latent_distance"], res.table.tolist(),
                   _check_writable(args.out))
    print(json.dumps({"rho": res.rho, "p_value": res.p_value, "pairs": args.pairs}))
    return 0


def diag_sgw_corr(args) -> int:
    from .evaluation import sgw_correlation

    rho, table = sgw_correlation(args.pairs, args.seed, args.slices)
    if args.out:
        _write_csv(["sliced", "entropic"], table.tolist(), _check_writable(args.out))
    print(json.dumps({"rho": rho, "pairs": args.pairs}))
    return 0


def diag_surrogate(args) -> int:
    from .trainer import surrogate_vs_barycenter
    from .ot import SliceSet

    ckpt = _load_checkpoint(args.checkpoint)
    graphs = _graphs_arg(args)[: args.limit]
    cfg = ckpt.config
    rep = surrogate_vs_barycenter([to_mm_space(g) for g in graphs], ckpt.dictionary,
                                  SliceSet.make(cfg.slices, cfg.embed_dim, cfg.seed),
                                  args.iterations)
    if args.out:
        _write_jsonl(rep["rows"], _check_writable(args.out))
    print(json.dumps({k: v for k, v in rep.items() if k != "rows"}))
    return 0


def diag_rewire(args) -> int:
    from .evaluation import ego_graphs, rewire_diagnostic

    ckpt = _load_checkpoint(args.checkpoint)
    graphs = _load_graphs(args.data, args.data_format) if args.data else ego_graphs(args.count,
                                                                                 args.seed)
    eps = [float(x) for x in args.epsilons.split(",")]
    rows = rewire_diagnostic(graphs, ckpt, eps, args.seed, solver=args.solver,
                             **_solver_options(args))
    if args.out:
        _write_jsonl(rows, _check_writable(args.out))
    for r in rows:
        print(json.dumps(r))
    return 0


def diag_fisher(args) -> int:
    from .embed import read_embeddings
    from .evaluation import COMPONENTS, dominant_component, fisher_ratio
    from .stats import STAT_DIM

    _, labels, Z = read_embeddings(args.embeddings)
    k = args.k
    if k is None:
        if not args.checkpoint:
            raise CliError("pass --k or --checkpoint so embedding blocks can be located")
        k = _load_checkpoint(args.checkpoint).dictionary.k
    r = STAT_DIM
    rows = [{"component": c, "ratio": fisher_ratio(Z, labels, c, k, r)} for c in COMPONENTS]
    dom, _ = dominant_component(Z, labels, k, r)
    if args.out:
        _write_jsonl(rows + [{"dominant": dom}], _check_writable(args.out))
    print(json.dumps({"ratios": {x["component"]: x["ratio"] for x in rows}, "dominant": dom}))
    return 0


def diag_gradcheck(args) -> int:
    from .trainer import grad_check

    cfg = _train_config(args)
    rep = grad_check(cfg, args.seed if args.seed is not None else cfg.seed)
    if args.out:
        _write_jsonl([rep.as_dict()], _check_writable(args.out))
    print(json.dumps(rep.as_dict()))
    return 0 if rep.passed else 1


def diag_bench(args) -> int:
    from .evaluation import bench_sliced

    sizes = [int(x) for x in args.sizes.split(",")]
    rows = bench_sliced(sizes, args.avg_degree, args.slices, repeats=args.repeats,
                        seed=args.seed)
    if args.out:
        _write_csv(["n", "seconds", "ratio"], [[r["n"], r["seconds"], r["ratio"]] for r in rows],
                   _check_writable(args.out))
    for r in rows:
        print(json.dumps(r))
    return 0


DIAGNOSTICS = {
    "isometry": diag_isometry,
    "sgw-corr": diag_sgw_corr,
    "surrogate": diag_surrogate,
    "rewire": diag_rewire,
    "fisher": diag_fisher,
    "gradcheck": diag_gradcheck,
    "bench": diag_bench,
}


def cmd_diagnose(args) -> int:
    return DIAGNOSTICS[args.diagnostic](args)


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training", "defaults shown; a --config file overrides them and "
                                         "flags override the file")
    g.add_argument("--config", help="JSON object of training settings")
    g.add_argument("--k", type=int, help=f"number of bases (default {d.k})")
    g.add_argument("--m-nodes", dest="m_nodes", type=int,
                   help=f"points per base (default {d.m_nodes})")
    g.add_argument("--slices", type=int, help=f"sliced-GW directions (default {d.slices})")
    g.add_argument("--temperature", type=float, help=f"softmax temperature (default {d.temperature})")
    g.add_argument("--alpha", type=float, help=f"reconstruction weight (default {d.alpha})")
    g.add_argument("--beta", type=float, help=f"diversity weight (default {d.beta})")
    g.add_argument("--margin", type=float, help=f"diversity margin (default {d.margin})")
    g.add_argument("--epochs", type=int, help=f"epochs (default {d.epochs})")
    g.add_argument("--batch-size", dest="batch_size", type=int,
                   help=f"batch size (default {d.batch_size})")
    g.add_argument("--lr", dest="learning_rate", type=float,
                   help=f"learning rate (default {d.learning_rate})")
    g.add_argument("--seed", type=int, help=f"random seed (default {d.seed})")
    g.add_argument("--solver", choices=("entropic", "sliced"),
                   help=f"training GW solver (default {d.solver})")
    g.add_argument("--stop-grad-weights", dest="stop_grad_weights", action="store_const",
                   const=True, help="do not backpropagate through the coordinates (default off)")
    g.add_argument("--optimizer", choices=("adam", "sgd"), help=f"optimizer (default {d.optimizer})")
    g.add_argument("--hidden", type=int, help=f"decoder hidden width (default {d.hidden})")
    g.add_argument("--warm-outer", dest="warm_outer", type=int,
                   help=f"outer iterations of warm-started solves (default {d.warm_outer})")


def _add_threads(p):
    p.add_argument("--threads", type=int,
                   help="worker threads (default: $SCGFM_THREADS or 1)")


def _add_data(p, required=True, flag="--format"):
    p.add_argument("--data", required=required,
                   help="dataset path: JSON-lines file, directory of them, or TU directory")
    p.add_argument(flag, dest="data_format", choices=("auto", "json", "tu"), default="auto",
                   help="dataset format (default auto: TU if the directory has *_A.txt)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scgfm", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train a dictionary and decoder")
    _add_data(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="write per-epoch JSON-lines metrics here")
    _add_train_flags(p)
    _add_threads(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("embed", help="embed graphs with a frozen checkpoint")
    _add_data(p, flag="--data-format")
    p.add_argument("--checkpoint", required=True, help="checkpoint written by pretrain")
    p.add_argument("--out", required=True, help="embedding output path")
    p.add_argument("--format", choices=("jsonl", "bin"), default="jsonl",
                   help="embedding file format (default jsonl)")
    p.add_argument("--solver", choices=("entropic", "sliced", "exact"), default="entropic",
                   help="GW solver for coordinates (default entropic)")
    p.add_argument("--restarts", type=int, help="entropic solver restarts (default 6)")
    _add_threads(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="few-shot prototypical evaluation")
    p.add_argument("--embeddings", required=True, help="JSON-lines or binary embedding file")
    p.add_argument("--n-way", dest="n_way", type=int, default=2, help="classes per episode (default 2)")
    p.add_argument("--shots", type=int, default=5, help="support items per class (default 5)")
    p.add_argument("--queries", type=int, default=50, help="queries per class (default 50)")
    p.add_argument("--runs", type=int, default=50, help="episodes (default 50)")
    p.add_argument("--seed", type=int, default=0, help="episode seed (default 0)")
    p.add_argument("--no-standardize", action="store_true",
                   help="skip support-statistics z-scoring (default: standardize)")
    p.add_argument("--dataset", help="dataset name for result rows (default: file stem)")
    p.add_argument("--out", help="write per-run and summary rows as JSON-lines")
    _add_threads(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="diagnostics and benchmarks")
    dsub = p.add_subparsers(dest="diagnostic", required=True)

    q = dsub.add_parser("isometry", help="GW distance vs latent distance correlation")
    q.add_argument("--checkpoint", required=True, help="checkpoint written by pretrain")
    _add_data(q, required=False)
    q.add_argument("--synthetic", type=int, default=200,
                   help="two-topology corpus size when --data is absent (default 200)")
    q.add_argument("--pairs", type=int, default=200, help="graph pairs (default 200)")
    q.add_argument("--seed", type=int, default=0, help="pair seed (default 0)")
    q.add_argument("--solver", choices=("entropic", "sliced", "exact"), default="entropic")
    q.add_argument("--restarts", type=int, help="entropic solver restarts (default 6)")
    q.add_argument("--out", help="CSV of (gw_distance, latent_distance)")

    q = dsub.add_parser("sgw-corr", help="sliced vs entropic GW correlation")
    q.add_argument("--pairs", type=int, default=200, help="random G(n, 0.3) pairs (default 200)")
    q.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    q.add_argument("--slices", type=int, default=50, help="slice count (default 50)")
    q.add_argument("--out", help="CSV of (sliced, entropic)")

    q = dsub.add_parser("surrogate", help="linear surrogate vs fixed-point barycenter")
    q.add_argument("--checkpoint", required=True, help="checkpoint written by pretrain")
    _add_data(q, required=False)
    q.add_argument("--synthetic", type=int, default=30,
                   help="two-topology corpus size when --data is absent (default 30)")
    q.add_argument("--seed", type=int, default=0, help="corpus seed (default 0)")
    q.add_argument("--limit", type=int, default=30, help="max graphs (default 30)")
    q.add_argument("--iterations", type=int, default=20, help="barycenter iterations (default 20)")
    q.add_argument("--out", help="JSON-lines rows per graph")

    q = dsub.add_parser("rewire", help="fixed-feature topology perturbation")
    q.add_argument("--checkpoint", required=True, help="checkpoint written by pretrain")
    _add_data(q, required=False)
    q.add_argument("--count", type=int, default=200, help="synthetic ego-graphs (default 200)")
    q.add_argument("--epsilons", default="0,0.3,0.7", help="rewiring probabilities (default 0,0.3,0.7)")
    q.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    q.add_argument("--solver", choices=("entropic", "sliced", "exact"), default="entropic")
    q.add_argument("--restarts", type=int, help="entropic solver restarts (default 6)")
    q.add_argument("--out", help="JSON-lines rows per epsilon")

    q = dsub.add_parser("fisher", help="Fisher separability per embedding component")
    q.add_argument("--embeddings", required=True, help="labelled embedding file")
    q.add_argument("--k", type=int, help="number of bases (or give --checkpoint)")
    q.add_argument("--checkpoint", help="checkpoint giving K")
    q.add_argument("--out", help="JSON-lines ratios")

    q = dsub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_train_flags(q)
    q.add_argument("--out", help="JSON-lines report")

    q = dsub.add_parser("bench", help="sliced GW wall time vs graph size")
    q.add_argument("--sizes", default="500,1000,2000,4000", help="node counts (default 500,1000,2000,4000)")
    q.add_argument("--avg-degree", dest="avg_degree", type=float, default=8.0,
                   help="average degree (default 8)")
    q.add_argument("--slices", type=int, default=50, help="slice count (default 50)")
    q.add_argument("--repeats", type=int, default=5, help="timed repeats, median reported (default 5)")
    q.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    q.add_argument("--out", help="CSV of (n, seconds, ratio)")

    for name in dsub.choices:
        _add_threads(dsub.choices[name])
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ScgfmError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
