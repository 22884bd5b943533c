"""Few-shot evaluation and representation diagnostics."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from . import ot
from .embed import embed_graph
from .errors import InsufficientClassError, UndefinedCorrelationError
from .graph import (Graph, generate_er, generate_sparse_er, ppr_subgraph, rewire, to_mm_space)
from .trainer import Checkpoint

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8
SW_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# episodes


@dataclass(frozen=True, eq=False)
class Episode:
    n_way: int
    k_shot: int
    queries_per_class: int
    classes: np.ndarray  # sorted episode classes
    support: np.ndarray  # pool indices
    support_labels: np.ndarray
    query: np.ndarray
    query_labels: np.ndarray
    seed: int


def sample_episodes(labels: Sequence[int], n_way: int, k_shot: int = 5, queries: int = 50,
                    runs: int = 50, seed: int = 0) -> list[Episode]:
    """Draw ``runs`` n-way k-shot episodes over a labeled pool.

    Classes with fewer than ``k_shot + queries`` members are excluded with a
    warning. Support and query items are drawn without replacement and never
    overlap.
    """
    labels = np.asarray(labels)
    need = k_shot + queries
    classes, counts = np.unique(labels, return_counts=True)
    small = classes[counts < need]
    for c in small:
        log.warning("class %s has %d members, fewer than %d; excluded", c,
                    int(counts[classes == c][0]), need)
    eligible = classes[counts >= need]
    if len(eligible) < n_way:
        detail = ", ".join(f"class {c}: {int(n)}" for c, n in zip(classes, counts) if n < need)
        raise InsufficientClassError(
            f"need {n_way} classes with >= {need} members, found {len(eligible)}"
            + (f" ({detail})" if detail else ""))
    rng = np.random.default_rng(seed)
    members = {c: np.flatnonzero(labels == c) for c in eligible}
    episodes = []
    for _ in range(runs):
        chosen = np.sort(rng.choice(eligible, size=n_way, replace=False))
        sup, sup_y, qry, qry_y = [], [], [], []
        for c in chosen:
            pick = rng.choice(members[c], size=need, replace=False)
            sup.append(pick[:k_shot])
            qry.append(pick[k_shot:])
            sup_y.append(np.full(k_shot, c))
            qry_y.append(np.full(queries, c))
        episodes.append(Episode(n_way, k_shot, queries, chosen, np.concatenate(sup),
                                np.concatenate(sup_y), np.concatenate(qry),
                                np.concatenate(qry_y), seed))
    return episodes


def proto_classify(ep: Episode, pool: np.ndarray, standardize: bool = True):
    """Nearest-prototype classification of the episode's queries.

    Parameters
    ----------
    pool : ndarray
        Embedding matrix indexed by the episode's pool indices.
    standardize : bool
        z-score every dimension with support statistics (std floored at 1e-8).

    Returns
    -------
    accuracy : float
    predictions : ndarray
        Predicted class label per query; ties go to the lowest class.
    """
    S = np.asarray(pool[ep.support], dtype=np.float64)
    Q = np.asarray(pool[ep.query], dtype=np.float64)
    if standardize:
        mu = S.mean(axis=0)
        sd = np.maximum(S.std(axis=0), STD_FLOOR)
        S = (S - mu) / sd
        Q = (Q - mu) / sd
    protos = np.stack([S[ep.support_labels == c].mean(axis=0) for c in ep.classes])
    d2 = ((Q[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
    pred = ep.classes[np.argmin(d2, axis=1)]
    return float(np.mean(pred == ep.query_labels)), pred


def evaluate_few_shot(pool: np.ndarray, labels: Sequence[int], n_way: int, k_shot: int = 5,
                      queries: int = 50, runs: int = 50, seed: int = 0,
                      standardize: bool = True) -> tuple[list[dict], dict]:
    """Per-run accuracy rows and a ``{mean, std}`` summary (std over runs)."""
    eps = sample_episodes(labels, n_way, k_shot, queries, runs, seed)
    rows = []
    for run, ep in enumerate(eps):
        acc, _ = proto_classify(ep, pool, standardize)
        rows.append({"n_way": n_way, "k_shot": k_shot, "run": run, "accuracy": acc,
                     "standardize": standardize})
    accs = np.array([r["accuracy"] for r in rows])
    return rows, {"mean": float(accs.mean()), "std": float(accs.std()), "runs": runs,
                  "n_way": n_way, "k_shot": k_shot, "standardize": standardize}


# ---------------------------------------------------------------------------
# similarity measures


def cka_linear(x: np.ndarray, y: np.ndarray) -> float:
    """Linear centered kernel alignment of two representations of the same rows."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("need at least two rows")
    x = x - x.mean(axis=0)
    y = y - y.mean(axis=0)
    nx = np.linalg.norm(x.T @ x)
    ny = np.linalg.norm(y.T @ y)
    if nx == 0 or ny == 0:
        return 0.0
    return float(np.linalg.norm(y.T @ x) ** 2 / (nx * ny))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson needs two equal-length vectors of length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(xc @ xc)
    sy = np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant input")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def permutation_pvalue(x, y, shuffles: int = 10_000, seed: int = 0) -> float:
    """Two-sided permutation p-value of the Pearson correlation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rho = abs(pearson(x, y))
    rng = np.random.default_rng(seed)
    xc = (x - x.mean()) / np.linalg.norm(x - x.mean())
    yc = (y - y.mean()) / np.linalg.norm(y - y.mean())
    hits = 0
    for start in range(0, shuffles, 1000):
        count = min(1000, shuffles - start)
        perms = rng.permuted(np.broadcast_to(yc, (count, yc.size)), axis=1)
        hits += int(np.sum(np.abs(perms @ xc) >= rho - 1e-12))
    return (hits + 1) / (shuffles + 1)


def analytic_pvalue(x, y) -> float:
    """Two-sided t-test p-value of the Pearson correlation."""
    return float(sps.pearsonr(x, y).pvalue)


# ---------------------------------------------------------------------------
# isometry study


@dataclass(frozen=True, eq=False)
class IsometryResult:
    rho: float
    p_value: float
    table: np.ndarray  # rows (gw_distance, latent_distance)
    pairs: np.ndarray


def reference_gw(a, b) -> float:
    """Exact GW for small equal-size uniform instances, entropic otherwise."""
    uniform = np.ptp(a.measure) <= 1e-12 and np.ptp(b.measure) <= 1e-12
    if a.size == b.size and a.size <= 8 and uniform:
        return ot.exact_gw(a, b).cost
    return ot.entropic_gw(a, b).cost


def isometry_study(graphs: Sequence[Graph], ckpt: Checkpoint, pairs: int = 200, seed: int = 0,
                   solver: str = "entropic", shuffles: int = 10_000,
                   embeddings: np.ndarray | None = None, **options) -> IsometryResult:
    """Correlate reference GW distances with Euclidean embedding distances."""
    n = len(graphs)
    if n < 2:
        raise ValueError("need at least two graphs")
    rng = np.random.default_rng(seed)
    idx = np.array([rng.choice(n, size=2, replace=False) for _ in range(pairs)])
    if embeddings is None:
        embeddings = np.stack([embed_graph(g, ckpt, solver, **options).vector for g in graphs])
    spaces = [to_mm_space(g) for g in graphs]
    table = np.empty((pairs, 2))
    for r, (i, j) in enumerate(idx):
        table[r, 0] = reference_gw(spaces[i], spaces[j])
        table[r, 1] = float(np.linalg.norm(embeddings[i] - embeddings[j]))
    rho = pearson(table[:, 0], table[:, 1])
    p = permutation_pvalue(table[:, 0], table[:, 1], shuffles, seed)
    return IsometryResult(rho, p, table, idx)


# ---------------------------------------------------------------------------
# Fisher separability


COMPONENTS = ("coords", "decoded", "features", "full")


def component_slice(component: str, k: int, r: int) -> slice:
    if component == "coords":
        return slice(0, k)
    if component == "decoded":
        return slice(k, k + r)
    if component == "features":
        return slice(k + r, None)
    if component == "full":
        return slice(None)
    raise ValueError(f"unknown component {component!r}; expected one of {COMPONENTS}")


def fisher_ratio(z: np.ndarray, labels: Sequence[int], component: str = "full",
                 k: int | None = None, r: int | None = None) -> float:
    """Between-class over within-class scatter ``S_b / max(S_w, 1e-12)``.

    ``k`` and ``r`` give the block sizes of the embedding layout and are
    required for every component except ``full``.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    if component != "full":
        if k is None or r is None:
            raise ValueError("k and r are needed to select an embedding component")
        z = z[:, component_slice(component, k, r)]
    classes = np.unique(labels)
    if len(classes) < 2:
        raise InsufficientClassError("Fisher ratio needs at least two classes")
    mu = z.mean(axis=0)
    sw = 0.0
    sb = 0.0
    for c in classes:
        zc = z[labels == c]
        mc = zc.mean(axis=0)
        sw += np.sum((zc - mc) ** 2)
        sb += len(zc) * np.sum((mc - mu) ** 2)
    sw /= len(z)
    sb /= len(z)
    return float(sb / max(sw, SW_FLOOR))


def dominant_component(z, labels, k: int, r: int,
                       candidates: Sequence[str] = ("coords", "features")) -> tuple[str, dict]:
    """Component with the largest Fisher ratio, and all ratios."""
    ratios = {c: fisher_ratio(z, labels, c, k, r) for c in candidates}
    return max(ratios, key=ratios.get), ratios


# ---------------------------------------------------------------------------
# topology perturbation and solver diagnostics


def ego_graphs(count: int, seed: int, nodes: int = 2000, avg_degree: float = 6.0,
               cap: int = 20) -> list[Graph]:
    """PPR ego-subgraphs around random centers of one sparse random graph."""
    g = generate_sparse_er(nodes, avg_degree, seed)
    rng = np.random.default_rng(seed)
    centers = rng.choice(nodes, size=count, replace=False)
    out = []
    for c in centers:
        sub = ppr_subgraph(g, int(c), cap)
        out.append(Graph(sub.node_count, sub.edges, None, None, int(c)))
    return out


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0 if nu == nv else 1.0
    return float(1.0 - (u @ v) / (nu * nv))


def rewire_diagnostic(graphs: Sequence[Graph], ckpt: Checkpoint,
                      epsilons: Sequence[float] = (0.0, 0.3, 0.7), seed: int = 0,
                      feature_dim: int = 8, solver: str = "entropic", **options) -> list[dict]:
    """Mean cosine distance of ``vec(H)`` before and after rewiring.

    Every graph gets fixed random Gaussian node features, so only the
    topology changes between the two projections.
    """
    rng = np.random.default_rng(seed)
    fixed = []
    for g in graphs:
        X = rng.standard_normal((g.node_count, feature_dim))
        fixed.append(Graph(g.node_count, g.edges, X, g.label, g.graph_id))
    base = [embed_graph(g, ckpt, solver, **options).features.ravel() for g in fixed]
    rows = []
    for eps in epsilons:
        dists = []
        for i, g in enumerate(fixed):
            h = embed_graph(rewire(g, eps, seed + i), ckpt, solver, **options).features.ravel()
            dists.append(cosine_distance(base[i], h))
        rows.append({"epsilon": float(eps), "mean_cosine_distance": float(np.mean(dists)),
                     "graphs": len(fixed)})
    return rows


def random_pairs(count: int, seed: int, n_range: tuple[int, int] = (10, 30), p: float = 0.3):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        ga = generate_er(int(rng.integers(n_range[0], n_range[1] + 1)), p, int(rng.integers(2**31)))
        gb = generate_er(int(rng.integers(n_range[0], n_range[1] + 1)), p, int(rng.integers(2**31)))
        pairs.append((ga, gb))
    return pairs


def sgw_correlation(pairs: int = 200, seed: int = 0, slices: int = 50, dim: int = 8,
                    n_range: tuple[int, int] = (10, 30), p: float = 0.3):
    """Pearson correlation of sliced and entropic GW over random G(n, p) pairs.

    Returns ``(rho, table)`` with table rows ``(sliced, entropic)``.
    """
    sl = ot.SliceSet.make(slices, dim, seed)
    table = []
    for ga, gb in random_pairs(pairs, seed, n_range, p):
        a, b = to_mm_space(ga), to_mm_space(gb)
        table.append((ot.sliced_gw(a, b, sl).cost, ot.entropic_gw(a, b).cost))
    table = np.array(table)
    return pearson(table[:, 0], table[:, 1]), table


def bench_sliced(sizes: Sequence[int] = (500, 1000, 2000, 4000), avg_degree: float = 8.0,
                 slices: int = 50, dim: int = 8, repeats: int = 5, seed: int = 0) -> list[dict]:
    """Median wall time of :func:`scgfm.ot.sliced_gw` on sparse random graph pairs.

    Timings include the spectral embedding of both inputs.
    """
    sl = ot.SliceSet.make(slices, dim, seed)
    rows = []
    prev = None
    for n in sizes:
        a = to_mm_space(generate_sparse_er(n, avg_degree, seed), sparse=True)
        b = to_mm_space(generate_sparse_er(n, avg_degree, seed + 1), sparse=True)
        ot.sliced_gw(a, b, sl)  # warm-up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            ot.sliced_gw(a, b, sl)
            times.append(time.perf_counter() - t0)
        t = float(np.median(times))
        rows.append({"n": int(n), "seconds": t,
                     "ratio": None if prev is None else t / prev})
        prev = t
    return rows
