"""Graphs, metric measure spaces, dataset ingestion and ego-subgraph sampling."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyGraphError, IntegrityError, ParseError

log = logging.getLogger(__name__)

# above this size to_mm_space keeps the structure sparse unless told otherwise
SPARSE_THRESHOLD = 1024


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with optional node features and a class label.

    ``edges`` is an ``(E, 2)`` int array with ``i < j`` in every row, sorted
    lexicographically, so two graphs with the same edge set compare equal.
    """

    node_count: int
    edges: np.ndarray
    features: np.ndarray | None = None
    label: int | None = None
    graph_id: str | int | None = None

    def __post_init__(self):
        n = int(self.node_count)
        if n < 0:
            raise IntegrityError(f"negative node count {n}")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise IntegrityError(f"edge endpoint out of range for N={n}")
            if np.any(e[:, 0] == e[:, 1]):
                bad = e[e[:, 0] == e[:, 1]][0]
                raise IntegrityError(f"self-loop on node {bad[0]}")
            e = np.sort(e, axis=1)
            e = e[np.lexsort((e[:, 1], e[:, 0]))]
            dup = np.all(e[1:] == e[:-1], axis=1)
            if np.any(dup):
                bad = e[1:][dup][0]
                raise IntegrityError(f"duplicate edge ({bad[0]}, {bad[1]})")
        e.setflags(write=False)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", e)
        if self.features is not None:
            x = np.array(self.features, dtype=np.float64)
            if x.ndim == 1:
                x = x[:, None]
            if x.ndim != 2 or x.shape[0] != n:
                raise IntegrityError(
                    f"feature matrix has {x.shape[0] if x.ndim else 0} rows, expected {n}"
                )
            x.setflags(write=False)
            object.__setattr__(self, "features", x)

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        np.add.at(deg, self.edges.ravel(), 1)
        return deg

    def adjacency(self, sparse: bool = False):
        n = self.node_count
        i, j = self.edges[:, 0], self.edges[:, 1]
        if sparse:
            data = np.ones(2 * len(i))
            return sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))
        a = np.zeros((n, n))
        a[i, j] = 1.0
        a[j, i] = 1.0
        return a

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    def features_or_constant(self) -> np.ndarray:
        if self.features is not None:
            return self.features
        return np.ones((self.node_count, 1))

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel node ``v`` as ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        x = None
        if self.features is not None:
            x = np.empty_like(self.features)
            x[perm] = self.features
        return Graph(self.node_count, perm[self.edges], x, self.label, self.graph_id)

    def induced(self, nodes: Sequence[int]) -> "Graph":
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = -np.ones(self.node_count, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        e = remap[self.edges]
        e = e[(e >= 0).all(axis=1)]
        x = None if self.features is None else self.features[nodes]
        return Graph(len(nodes), e, x, self.label, self.graph_id)

    def with_edges(self, edges) -> "Graph":
        return Graph(self.node_count, edges, self.features, self.label, self.graph_id)


@dataclass(frozen=True, eq=False)
class MmSpace:
    """A structure matrix with a probability measure on its points.

    ``structure`` is a dense array or, for large graphs, a scipy sparse
    matrix. ``support`` maps each point back to its node id in the source
    graph (identity when no node was dropped).
    """

    structure: np.ndarray | sp.spmatrix
    measure: np.ndarray
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.measure, dtype=np.float64)
        n = p.shape[0]
        if n == 0:
            raise EmptyGraphError("mm-space has no points")
        if self.structure.shape != (n, n):
            raise IntegrityError(
                f"structure shape {self.structure.shape} does not match measure length {n}"
            )
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise IntegrityError("measure is not a probability vector")
        object.__setattr__(self, "measure", p)
        if self.support is None:
            object.__setattr__(self, "support", np.arange(n))

    @property
    def size(self) -> int:
        return int(self.measure.shape[0])

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.structure)

    def dense(self) -> np.ndarray:
        if self.is_sparse:
            return self.structure.toarray()
        return np.asarray(self.structure, dtype=np.float64)

    @classmethod
    def uniform(cls, structure) -> "MmSpace":
        n = structure.shape[0]
        return cls(structure, np.full(n, 1.0 / n))


def to_mm_space(g: Graph, sparse: bool | None = None) -> MmSpace:
    """Adjacency structure with the degree measure ``deg(i) / sum(deg)``.

    Zero-degree nodes carry no mass and are dropped from the support unless
    the whole graph is edgeless, in which case the measure is uniform.
    """
    n = g.node_count
    if n == 0:
        raise EmptyGraphError("graph has no nodes")
    if sparse is None:
        sparse = n > SPARSE_THRESHOLD
    deg = g.degrees().astype(np.float64)
    total = deg.sum()
    if total == 0:
        a = sp.csr_matrix((n, n)) if sparse else np.zeros((n, n))
        return MmSpace(a, np.full(n, 1.0 / n), np.arange(n))
    keep = np.flatnonzero(deg > 0)
    a = g.adjacency(sparse=sparse)
    if len(keep) < n:
        a = a[keep][:, keep]
    p = deg[keep] / total
    return MmSpace(a, p, keep)


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path: Path, dtype=float) -> list[list]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([dtype(tok) for tok in line.replace(",", " ").split()])
            except ValueError as exc:
                raise ParseError(f"{path.name}:{lineno}: {exc}") from None
    return rows


def _find(directory: Path, suffix: str) -> Path | None:
    hits = sorted(directory.glob(f"*_{suffix}.txt"))
    return hits[0] if hits else None


def load_tu_dataset(directory) -> list[Graph]:
    """Read a TUDataset directory (``DS_A.txt``, ``DS_graph_indicator.txt``, ...).

    Node attributes become features; otherwise node labels are one-hot
    encoded; otherwise every node gets the constant feature 1.0.
    """
    directory = Path(directory)
    a_path = _find(directory, "A")
    ind_path = _find(directory, "graph_indicator")
    lab_path = _find(directory, "graph_labels")
    if a_path is None or ind_path is None or lab_path is None:
        raise ParseError(f"{directory}: missing DS_A / DS_graph_indicator / DS_graph_labels")

    indicator = np.array([r[0] for r in _read_rows(ind_path, int)], dtype=np.int64)
    labels = [r[0] for r in _read_rows(lab_path, int)]
    n_graphs = len(labels)
    n_nodes = len(indicator)
    if indicator.size and (indicator.min() < 1 or indicator.max() > n_graphs):
        raise IntegrityError(f"{ind_path.name}: graph index out of range 1..{n_graphs}")

    edges = []
    for lineno, row in enumerate(_read_rows(a_path, int), 1):
        if len(row) != 2:
            raise ParseError(f"{a_path.name}:{lineno}: expected 2 fields, got {len(row)}")
        i, j = row
        if not (1 <= i <= n_nodes and 1 <= j <= n_nodes):
            raise IntegrityError(f"{a_path.name}:{lineno}: node index out of range 1..{n_nodes}")
        edges.append((i - 1, j - 1))
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)

    attr_path = _find(directory, "node_attributes")
    nlab_path = _find(directory, "node_labels")
    if attr_path is not None:
        feats = np.array(_read_rows(attr_path, float), dtype=np.float64)
    elif nlab_path is not None:
        nl = np.array([r[0] for r in _read_rows(nlab_path, int)], dtype=np.int64)
        values = np.unique(nl)
        feats = (nl[:, None] == values[None, :]).astype(np.float64)
    else:
        feats = np.ones((n_nodes, 1))
    if feats.shape[0] != n_nodes:
        raise IntegrityError(f"feature rows {feats.shape[0]} != node count {n_nodes}")

    graph_of = indicator - 1
    if edges.size and np.any(graph_of[edges[:, 0]] != graph_of[edges[:, 1]]):
        raise IntegrityError(f"{a_path.name}: edge crosses graph boundary")
    order = np.argsort(graph_of, kind="stable")
    starts = np.searchsorted(graph_of[order], np.arange(n_graphs))
    ends = np.searchsorted(graph_of[order], np.arange(n_graphs), side="right")
    local = np.empty(n_nodes, dtype=np.int64)
    for gi in range(n_graphs):
        local[order[starts[gi]:ends[gi]]] = np.arange(ends[gi] - starts[gi])

    edge_graph = graph_of[edges[:, 0]] if edges.size else np.zeros(0, dtype=np.int64)
    graphs = []
    for gi in range(n_graphs):
        nodes = order[starts[gi]:ends[gi]]
        e = edges[edge_graph == gi]
        e = np.sort(local[e], axis=1) if e.size else e
        # TU files list each undirected edge in both directions
        e = np.unique(e, axis=0) if e.size else e
        e = e[e[:, 0] != e[:, 1]] if e.size else e
        graphs.append(Graph(len(nodes), e, feats[nodes], int(labels[gi]), gi))
    return graphs


def write_tu_dataset(graphs: Sequence[Graph], directory, name: str = "DS") -> None:
    """Write graphs in TUDataset text format; features go to node_attributes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offset = 0
    a_lines, ind_lines, lab_lines, attr_lines = [], [], [], []
    for gi, g in enumerate(graphs, 1):
        for i, j in g.edges:
            a_lines.append(f"{i + offset + 1}, {j + offset + 1}")
            a_lines.append(f"{j + offset + 1}, {i + offset + 1}")
        ind_lines.extend([str(gi)] * g.node_count)
        lab_lines.append(str(0 if g.label is None else g.label))
        for row in g.features_or_constant():
            attr_lines.append(", ".join(repr(float(v)) for v in row))
        offset += g.node_count
    for suffix, lines in [("A", a_lines), ("graph_indicator", ind_lines),
                          ("graph_labels", lab_lines), ("node_attributes", attr_lines)]:
        (directory / f"{name}_{suffix}.txt").write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8")


def _graph_from_record(rec, lineno: int) -> Graph:
    if not isinstance(rec, dict) or "n" not in rec or "edges" not in rec:
        raise ParseError(f"line {lineno}: record needs 'n' and 'edges'")
    n, edges = rec["n"], rec["edges"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ParseError(f"line {lineno}: 'n' must be a positive integer")
    if not isinstance(edges, list) or any(
        not isinstance(e, list) or len(e) != 2 or not all(isinstance(v, int) for v in e)
        for e in edges
    ):
        raise ParseError(f"line {lineno}: 'edges' must be a list of [i, j] integer pairs")
    label = rec.get("label")
    if label is not None and not isinstance(label, int):
        raise ParseError(f"line {lineno}: 'label' must be an integer")
    try:
        return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2),
                     rec.get("features"), label, rec.get("id", lineno - 1))
    except IntegrityError as exc:
        raise IntegrityError(f"line {lineno}: {exc}") from None


def load_json_graphs(path) -> list[Graph]:
    """Read JSON-lines graphs: ``{"n": 3, "edges": [[0,1],[1,2]], "features": ..., "label": ...}``."""
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: {exc.msg}") from None
            graphs.append(_graph_from_record(rec, lineno))
    return graphs


def write_json_graphs(graphs: Iterable[Graph], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for idx, g in enumerate(graphs):
            rec = {"id": g.graph_id if g.graph_id is not None else idx,
                   "n": g.node_count, "edges": g.edges.tolist()}
            if g.features is not None:
                rec["features"] = g.features.tolist()
            if g.label is not None:
                rec["label"] = int(g.label)
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# generators and perturbations


def generate_er(n: int, p: float, seed: int) -> Graph:
    if n < 1 or not 0.0 <= p <= 1.0:
        raise ValueError(f"invalid G(n, p) parameters n={n}, p={p}")
    rng = np.random.default_rng(seed)
    i, j = np.triu_indices(n, k=1)
    mask = rng.random(i.shape[0]) < p
    return Graph(n, np.stack([i[mask], j[mask]], axis=1))


def generate_sparse_er(n: int, avg_degree: float, seed: int) -> Graph:
    """Sparse G(n, m) graph with about ``n * avg_degree / 2`` edges; O(m) time."""
    rng = np.random.default_rng(seed)
    m = int(round(n * avg_degree / 2))
    i = rng.integers(0, n, size=2 * m)
    j = rng.integers(0, n, size=2 * m)
    e = np.sort(np.stack([i, j], axis=1), axis=1)
    e = e[e[:, 0] != e[:, 1]]
    e = np.unique(e, axis=0)
    if len(e) > m:
        e = e[np.sort(rng.choice(len(e), size=m, replace=False))]
    return Graph(n, e)


def ppr_scores(g: Graph, center: int, alpha: float = 0.15, steps: int = 50) -> np.ndarray:
    """Personalized PageRank by power iteration of ``x <- alpha e + (1 - alpha) W x``.

    ``W`` is the column-stochastic random-walk matrix; dangling nodes send
    their mass back to the center.
    """
    n = g.node_count
    a = g.adjacency(sparse=True)
    deg = np.asarray(a.sum(axis=0)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    e = np.zeros(n)
    e[center] = 1.0
    # start at alpha * e so the iterates are partial sums of the Neumann series
    x = alpha * e
    dangling = deg == 0
    for _ in range(steps):
        spread = a @ (inv * x)
        spread[center] += x[dangling].sum()
        x = alpha * e + (1.0 - alpha) * spread
    return x


def ppr_subgraph(g: Graph, center: int, cap: int = 100, alpha: float = 0.15,
                 steps: int = 50) -> Graph:
    """Ego-subgraph of the center and its ``cap - 1`` highest-PPR nodes."""
    if not 0 <= center < g.node_count:
        raise IndexError(f"center {center} out of range for N={g.node_count}")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    scores = ppr_scores(g, center, alpha, steps)
    others = np.delete(np.arange(g.node_count), center)
    # descending score, ties by lower node id
    ranked = others[np.lexsort((others, -scores[others]))]
    nodes = np.sort(np.r_[center, ranked[: cap - 1]])
    sub = g.induced(nodes)
    return sub


def rewire(g: Graph, epsilon: float, seed: int) -> Graph:
    """Move each edge with probability ``epsilon`` to a random free node pair.

    Edges that cannot move (no free pair left, e.g. complete graphs) stay put,
    so the edge count is always preserved.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n = g.node_count
    present = g.edge_set()
    out = []
    capacity = n * (n - 1) // 2
    moves = rng.random(g.edge_count) < epsilon
    for (i, j), move in zip(g.edges.tolist(), moves):
        if not move or len(present) >= capacity:
            out.append((i, j))
            continue
        while True:
            u, v = rng.integers(0, n, size=2)
            if u == v:
                continue
            pair = (int(min(u, v)), int(max(u, v)))
            if pair not in present:
                break
        present.discard((i, j))
        present.add(pair)
        out.append(pair)
    return g.with_edges(np.array(out, dtype=np.int64).reshape(-1, 2))


# ---------------------------------------------------------------------------
# synthetic topology families


def clique_with_tail(n: int, rng: np.random.Generator) -> Graph:
    """A clique on roughly half the nodes with a path hanging off it."""
    k = int(rng.integers(max(3, n // 3), max(4, n // 2) + 1))
    edges = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges += [(v - 1, v) for v in range(k, n)]
    return Graph(n, edges)


def cycle_with_chords(n: int, rng: np.random.Generator, chords: int = 2) -> Graph:
    edges = {(v, v + 1) for v in range(n - 1)} | {(0, n - 1)}
    tries = 0
    added = 0
    while added < chords and tries < 100:
        tries += 1
        u, v = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
        if (u, v) not in edges and v - u not in (1, n - 1):
            edges.add((u, v))
            added += 1
    return Graph(n, sorted(edges))


def two_topology_corpus(size: int, seed: int, n_range: tuple[int, int] = (10, 20)) -> list[Graph]:
    """Balanced corpus: label 0 = clique with tail, label 1 = cycle with chords."""
    rng = np.random.default_rng(seed)
    graphs = []
    for idx in range(size):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        label = idx % 2
        g = clique_with_tail(n, rng) if label == 0 else cycle_with_chords(n, rng)
        perm = rng.permutation(n)
        g = g.permute(perm)
        graphs.append(Graph(g.node_count, g.edges, None, label, idx))
    return graphs
