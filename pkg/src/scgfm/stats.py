"""Graph-level statistics used as reconstruction targets.

The statistic vector has 19 entries: an 8-bin histogram of normalized
degrees, an 8-bin histogram of local clustering coefficients and three
size-normalized log motif counts (triangles, 4-cycles, 5-cycles).
"""

from __future__ import annotations

import numpy as np

from .graph import Graph

DEGREE_BINS = 8
CLUSTERING_BINS = 8
MOTIFS = ("triangle", "cycle4", "cycle5")
STAT_DIM = DEGREE_BINS + CLUSTERING_BINS + len(MOTIFS)

SCHEMA = {
    "degree_bins": DEGREE_BINS,
    "clustering_bins": CLUSTERING_BINS,
    "motifs": list(MOTIFS),
    "motif_scale": "log1p(count)/N",
    "dim": STAT_DIM,
}


def _powers(g: Graph):
    A = g.adjacency().astype(np.float64)
    A2 = A @ A
    A3 = A2 @ A
    return A, A2, A3


def count_motifs(g: Graph) -> tuple[int, int, int]:
    """Triangles, simple 4-cycles and simple 5-cycles from closed-walk traces.

    Uses

    .. math::

        6T = \\operatorname{tr} A^3, \\qquad
        8C_4 = \\operatorname{tr} A^4 - 4\\sum_i \\binom{d_i}{2} - 2|E|, \\qquad
        10C_5 = \\operatorname{tr} A^5 - 5\\operatorname{tr} A^3
                - 5\\sum_i (d_i - 2)(A^3)_{ii},

    which subtract the closed walks that revisit a node. Walk counts stay
    below ``2**53`` for graphs of up to a few thousand nodes, so the float
    products are exact.
    """
    if g.node_count == 0:
        return 0, 0, 0
    A, A2, A3 = _powers(g)
    d = A.sum(axis=1)
    a3 = np.diag(A3)
    tr3 = a3.sum()
    tr4 = float(np.sum(A2 * A2))
    tr5 = float(np.sum(A3 * A2))
    m = d.sum() / 2.0
    t = tr3 / 6.0
    c4 = (tr4 - 2.0 * np.sum(d * (d - 1)) - 2.0 * m) / 8.0
    c5 = (tr5 - 5.0 * tr3 - 5.0 * np.sum((d - 2.0) * a3)) / 10.0
    return int(round(t)), int(round(c4)), int(round(c5))


def _histogram(values: np.ndarray, bins: int) -> np.ndarray:
    # uniform bins on [0, 1], last bin closed on the right
    idx = np.minimum(np.floor(values * bins).astype(np.int64), bins - 1)
    h = np.bincount(idx, minlength=bins).astype(np.float64)
    return h / h.sum()


def clustering_coefficients(g: Graph) -> np.ndarray:
    """Local clustering ``2 t_i / (d_i (d_i - 1))``; zero below degree 2."""
    A, _, A3 = _powers(g)
    d = A.sum(axis=1)
    denom = d * (d - 1)
    return np.divide(np.diag(A3), denom, out=np.zeros_like(d), where=denom > 0)


def feature_extract(g: Graph) -> np.ndarray:
    """Statistic vector of length :data:`STAT_DIM` for one graph.

    Examples
    --------
    >>> from scgfm.graph import Graph
    >>> fe = feature_extract(Graph(3, [(0, 1), (1, 2), (0, 2)]))
    >>> fe[15], round(fe[16], 6)
    (1.0, 0.231049)
    """
    n = g.node_count
    deg = g.degrees().astype(np.float64) / max(n - 1, 1)
    cc = clustering_coefficients(g) if n else np.zeros(0)
    t, c4, c5 = count_motifs(g)
    motifs = np.log1p([t, c4, c5]) / max(n, 1)
    return np.concatenate([_histogram(deg, DEGREE_BINS),
                           _histogram(np.clip(cc, 0.0, 1.0), CLUSTERING_BINS),
                           motifs])
