"""Graph embeddings ``[w || f(w) || vec(H)]`` from a frozen checkpoint."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bases import CoordinateResult, structural_coordinates
from .decoder import decode
from .errors import IntegrityError, ParseError
from .graph import Graph, to_mm_space
from .ot import SliceSet
from .trainer import Checkpoint

BIN_MAGIC = "SCGFM-EMB 1"


@dataclass(frozen=True, eq=False)
class Embedding:
    coords: np.ndarray
    decoded: np.ndarray
    features: np.ndarray  # (M, F)
    graph_id: object = None
    label: int | None = None

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.coords, self.decoded, self.features.ravel(order="C")])

    def __len__(self) -> int:
        return self.coords.size + self.decoded.size + self.features.size


def project_features(g: Graph, coords: CoordinateResult, m: int,
                     support: np.ndarray | None = None) -> np.ndarray:
    """Transport node features onto the ``m`` base points.

    ``H_k = N T_k^T X`` with ``N`` the number of coupled nodes, and
    ``H = sum_k w_k H_k``. ``support`` lists the node ids the couplings'
    rows refer to (all nodes when omitted).
    """
    X = g.features_or_constant()
    if support is not None:
        X = X[support]
    n = X.shape[0]
    H = np.zeros((m, X.shape[1]))
    for w_k, t in zip(coords.weights, coords.couplings):
        plan = t.plan
        if plan.shape != (n, m):
            raise IntegrityError(f"coupling shape {plan.shape} does not match ({n}, {m})")
        H += w_k * n * np.asarray(plan.T @ X)
    return H


def embed_graph(g: Graph, ckpt: Checkpoint, solver: str = "entropic",
                slices: SliceSet | None = None, **options) -> Embedding:
    """Embed one graph against the frozen dictionary and decoder of ``ckpt``."""
    a = to_mm_space(g)
    if solver == "sliced" and slices is None:
        cfg = ckpt.config
        slices = SliceSet.make(cfg.slices, cfg.embed_dim, cfg.seed)
    coords = structural_coordinates(a, ckpt.dictionary, solver, slices, **options)
    H = project_features(g, coords, ckpt.dictionary.m, a.support)
    return Embedding(coords.weights, decode(ckpt.decoder, coords.weights), H, g.graph_id,
                     g.label)


def embedding_matrix(embeddings: Sequence[Embedding]) -> np.ndarray:
    return np.stack([e.vector for e in embeddings])


# ---------------------------------------------------------------------------
# export


def _jsonable_id(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def write_jsonl(records: Iterable[tuple[object, int | None, np.ndarray]], path) -> None:
    """One ``{"graph_id", "label", "z"}`` object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for gid, label, z in records:
            fh.write(json.dumps({"graph_id": _jsonable_id(gid),
                                 "label": None if label is None else int(label),
                                 "z": [float(v) for v in z]}) + "\n")


def read_jsonl(path) -> tuple[list, list, np.ndarray]:
    ids, labels, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ids.append(rec["graph_id"])
                labels.append(rec.get("label"))
                rows.append(np.asarray(rec["z"], dtype=np.float64))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if len({r.size for r in rows}) > 1:
        raise ParseError(f"{path}: records have different lengths")
    return ids, labels, np.stack(rows) if rows else np.zeros((0, 0))


def write_bin(records: Sequence[tuple[object, int | None, np.ndarray]], path) -> None:
    """Text header then little-endian float64 rows.

    The header is one line ``SCGFM-EMB 1 <rows> <dim>`` followed by one
    JSON line holding ``{"graph_id": [...], "label": [...]}``; the payload is
    the ``rows x dim`` matrix in row-major order.
    """
    Z = np.stack([np.asarray(z, dtype=np.float64) for _, _, z in records])
    meta = {"graph_id": [_jsonable_id(r[0]) for r in records],
            "label": [None if r[1] is None else int(r[1]) for r in records]}
    with open(path, "wb") as fh:
        fh.write(f"{BIN_MAGIC} {Z.shape[0]} {Z.shape[1]}\n".encode())
        fh.write((json.dumps(meta) + "\n").encode())
        fh.write(Z.astype("<f8").tobytes(order="C"))


def read_bin(path) -> tuple[list, list, np.ndarray]:
    data = Path(path).read_bytes()
    try:
        head_end = data.index(b"\n")
        magic_ver, rows, dim = data[:head_end].decode().rsplit(" ", 2)
        if magic_ver != BIN_MAGIC:
            raise ValueError(f"bad magic {magic_ver!r}")
        meta_end = data.index(b"\n", head_end + 1)
        meta = json.loads(data[head_end + 1:meta_end])
        rows, dim = int(rows), int(dim)
        Z = np.frombuffer(data[meta_end + 1:], dtype="<f8")
        if Z.size != rows * dim:
            raise ValueError(f"payload has {Z.size} values, expected {rows * dim}")
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return meta["graph_id"], meta["label"], Z.reshape(rows, dim).astype(np.float64)


def read_embeddings(path) -> tuple[list, list, np.ndarray]:
    """Read either export format, detected from the first bytes."""
    with open(path, "rb") as fh:
        head = fh.read(len(BIN_MAGIC))
    if head == BIN_MAGIC.encode():
        return read_bin(path)
    return read_jsonl(path)
