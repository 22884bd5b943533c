"""Gromov-Wasserstein solvers for the squared loss.

All solvers take :class:`~scgfm.graph.MmSpace` inputs and return a
:class:`GwResult` whose ``cost`` is the unregularized quadratic objective

.. math::

    \\sum_{i,k,j,l} (A_{ik} - B_{jl})^2 T_{ij} T_{kl}

evaluated at the returned coupling ``T``.
"""

from __future__ import annotations

import itertools
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IntegrityError, NumericalError, UnsupportedInstanceError
from . import _kernels as _k
from .graph import MmSpace

MARGINAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Coupling:
    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.plan.shape

    def marginal_error(self) -> float:
        rs = np.asarray(self.plan.sum(axis=1)).ravel()
        cs = np.asarray(self.plan.sum(axis=0)).ravel()
        r = np.abs(rs - self.row_marginal).max()
        c = np.abs(cs - self.col_marginal).max()
        return float(max(r, c))

    def is_valid(self, tol: float = MARGINAL_TOL) -> bool:
        return bool(self.plan.min() >= 0 and self.marginal_error() <= tol)


@dataclass(frozen=True, eq=False)
class GwResult:
    cost: float
    coupling: Coupling
    converged: bool = True
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class SliceSet:
    """``L`` unit directions in ``R^d`` drawn from a seeded Gaussian."""

    directions: np.ndarray
    seed: int

    @classmethod
    def make(cls, count: int, dim: int, seed: int) -> "SliceSet":
        rng = np.random.default_rng(seed)
        v = rng.standard_normal((count, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        v.setflags(write=False)
        return cls(v, seed)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


def _check_measure(p: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise IntegrityError(f"{name} is not a probability vector")


# ---------------------------------------------------------------------------
# objective and gradient


def gw_cost_at(a: MmSpace, b: MmSpace, t: Coupling | np.ndarray) -> float:
    """Quadratic GW objective at a fixed plan in O(N^2 M + N M^2)."""
    plan = t.plan if isinstance(t, Coupling) else np.asarray(t)
    if plan.shape != (a.size, b.size):
        raise IntegrityError(f"plan shape {plan.shape} != ({a.size}, {b.size})")
    return _cost(a.structure, b.structure, plan)


def _cost(A, B, T) -> float:
    r = T.sum(axis=1)
    c = T.sum(axis=0)
    A2 = A.multiply(A) if sp.issparse(A) else A * A
    B2 = B.multiply(B) if sp.issparse(B) else B * B
    AT = A @ T
    cross = float(np.sum((AT @ B) * T)) if not sp.issparse(B) else float(np.sum((B @ AT.T).T * T))
    val = float(r @ (A2 @ r)) + float(c @ (B2 @ c)) - 2.0 * cross
    return max(val, 0.0) if val > -1e-12 else val


def gw_gradient_b(a: MmSpace, b: MmSpace, t: Coupling | np.ndarray) -> np.ndarray:
    """Gradient of :func:`gw_cost_at` with respect to ``b.structure`` at a fixed plan.

    Returned symmetric with a zero diagonal, matching the parameterization of
    geometric bases.
    """
    plan = t.plan if isinstance(t, Coupling) else np.asarray(t)
    if plan.shape != (a.size, b.size):
        raise IntegrityError(f"plan shape {plan.shape} != ({a.size}, {b.size})")
    return _grad_b(a.structure, b.dense(), plan)


def _grad_b(A, B: np.ndarray, T: np.ndarray) -> np.ndarray:
    c = T.sum(axis=0)
    g = 2.0 * (B * np.outer(c, c) - T.T @ (A @ T))
    g = 0.5 * (g + g.T)
    np.fill_diagonal(g, 0.0)
    return g


# ---------------------------------------------------------------------------
# Sinkhorn


def sinkhorn(p, q, cost, epsilon, tol=1e-7, max_iter=1000) -> tuple[Coupling, bool]:
    """Log-domain Sinkhorn for entropic OT; the plan is rounded onto ``U(p, q)``."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    _check_measure(p, "row marginal")
    _check_measure(q, "column marginal")
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logp, logq = np.log(p), np.log(q)
    plan, converged, _ = _k.sinkhorn_log(logp, logq, p, cost, float(epsilon), tol, max_iter,
                                         np.zeros(len(p)), np.zeros(len(q)))
    if not np.all(np.isfinite(plan)):
        raise NumericalError(f"non-finite Sinkhorn plan (epsilon={epsilon})")
    return Coupling(round_to_marginals(plan, p, q), p, q), converged


def round_to_marginals(plan: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Project an approximate plan onto the transport polytope ``U(p, q)``.

    Rows and columns are scaled down to their targets and the remaining mass
    is added back as a rank-one correction (Altschuler et al., 2017).
    """
    plan = np.maximum(plan, 0.0)
    rs = plan.sum(axis=1)
    x = np.minimum(1.0, np.divide(p, rs, out=np.ones_like(p), where=rs > 0))
    plan = plan * x[:, None]
    cs = plan.sum(axis=0)
    y = np.minimum(1.0, np.divide(q, cs, out=np.ones_like(q), where=cs > 0))
    plan = plan * y[None, :]
    er = p - plan.sum(axis=1)
    ec = q - plan.sum(axis=0)
    mass = er.sum()
    if mass > 0:
        plan = plan + np.outer(np.maximum(er, 0), np.maximum(ec, 0)) / mass
    return plan


# ---------------------------------------------------------------------------
# solvers


def exact_gw(a: MmSpace, b: MmSpace) -> GwResult:
    """Brute-force GW over all permutations (equal size, uniform, n <= 8)."""
    n = a.size
    if b.size != n:
        raise UnsupportedInstanceError(f"sizes differ: {n} vs {b.size}")
    if n > 8:
        raise UnsupportedInstanceError(f"size {n} > 8 is too large for enumeration")
    for s in (a, b):
        if np.ptp(s.measure) > 1e-12:
            raise UnsupportedInstanceError("exact oracle requires uniform measures")
    A = a.dense()
    B = b.dense()
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    Bp = B[perms[:, :, None], perms[:, None, :]]
    # summing sorted residuals makes each cost a function of the residual multiset,
    # so relabeling either input gives bit-identical costs
    resid = ((A[None] - Bp) ** 2).reshape(len(perms), n * n)
    costs = np.sort(resid, axis=1).sum(axis=1) / (n * n)
    best = int(np.argmin(costs))
    plan = np.zeros((n, n))
    plan[np.arange(n), perms[best]] = 1.0 / n
    return GwResult(float(costs[best]), Coupling(plan, a.measure, b.measure), True, len(perms))


def entropic_gw(a: MmSpace, b: MmSpace, epsilon: float = 0.01, tol: float = 1e-7,
                max_outer: int = 50, max_inner: int = 100, restarts: int = 6,
                seed: int = 0, epsilon_start: float = 0.1, decay: float = 0.8,
                damping: float = 0.7, symmetric: bool = True,
                init: np.ndarray | None = None, init_floor: float = 1e-3) -> GwResult:
    """Entropic GW (Peyre et al., 2016) with epsilon-continuation and restarts.

    Each outer step linearizes the squared-loss objective at the current plan
    and solves the entropic OT problem with log-domain Sinkhorn, warm-started
    from the previous potentials. The regularization starts at
    ``epsilon_start`` and decays geometrically to ``epsilon``.

    The first run starts from the product coupling ``p q^T``. That start is a
    stationary point whenever the inputs have symmetries (regular graphs,
    vertex-transitive graphs), so with ``restarts > 0`` one more run starts
    from a north-west-corner coupling between the canonical orders of
    :func:`signature_order` and ``restarts - 1`` runs start from seeded
    random couplings. The plan with the lowest unregularized cost wins.
    With ``symmetric`` the whole search also runs on ``(b, a)``, which makes
    the result exactly symmetric in its arguments.

    Parameters
    ----------
    a, b : MmSpace
    epsilon : float
        Target entropic regularization (absolute; structures lie in [0, 1]).
    tol : float
        Sinkhorn marginal tolerance and outer plan-change tolerance.
    restarts : int
        Number of extra starts; 0 gives the plain product-start solver.
    damping : float
        Each outer step keeps ``1 - damping`` of the previous plan, which
        suppresses the period-two oscillation of the undamped iteration.
    init : ndarray, optional
        Warm-start plan (for example the plan of a previous, nearby problem).
        When given, a single run starts from it directly at ``epsilon``;
        restarts, continuation and the symmetric pass are skipped.
    init_floor : float
        The warm start is mixed up to at least ``init_floor`` times the
        product coupling, so a run can leave a nearly sparse plan.

    Notes
    -----
    Inputs are solved in the canonical order of :func:`signature_order`, so
    relabeling an input replays identical arithmetic whenever colour
    refinement separates its nodes (or ties only automorphic ones).

    Returns
    -------
    GwResult
        ``cost`` is the unregularized objective at the returned plan and
        ``converged`` refers to the winning run.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p, q = a.measure, b.measure
    _check_measure(p, "row marginal")
    _check_measure(q, "column marginal")
    A = a.dense()
    B = b.dense()
    # solve in a canonical node order so relabeled inputs replay the same arithmetic
    oa, ob = canonical_order(a), canonical_order(b)
    Ac = np.ascontiguousarray(A[np.ix_(oa, oa)])
    Bc = np.ascontiguousarray(B[np.ix_(ob, ob)])
    pc, qc = np.ascontiguousarray(p[oa]), np.ascontiguousarray(q[ob])
    if init is not None:
        T0 = np.asarray(init, dtype=np.float64)
        if T0.shape != (len(p), len(q)):
            raise IntegrityError(f"init shape {T0.shape} != ({len(p)}, {len(q)})")
        T0 = np.ascontiguousarray(round_to_marginals(T0, p, q)[np.ix_(oa, ob)])
        T0 = np.maximum(T0, init_floor * np.outer(pc, qc))
        T0 = round_to_marginals(T0, pc, qc)
        T, converged, it, finite = _k.entropic_plan(Ac, Bc, pc, qc, T0, float(epsilon), tol,
                                                    max_outer, max_inner, 0.0, 1.0, damping)
        if not finite:
            raise NumericalError(f"non-finite entropic GW plan (epsilon={epsilon})")
        Tc = round_to_marginals(T, pc, qc)
        T = np.empty_like(Tc)
        T[np.ix_(oa, ob)] = Tc
        return GwResult(_cost(Ac, Bc, Tc), Coupling(T, p, q), converged, it)
    args = (float(epsilon), tol, max_outer, max_inner, restarts, seed, epsilon_start, decay,
            damping)
    best = _oriented_gw(Ac, pc, Bc, qc, *args)
    if symmetric:
        other = _oriented_gw(Bc, qc, Ac, pc, *args)
        if other[0] < best[0]:
            best = (other[0], other[1].T, other[2], other[3])
    cost, Tc, converged, it = best
    T = np.empty_like(Tc)
    T[np.ix_(oa, ob)] = Tc
    return GwResult(cost, Coupling(T, p, q), converged, it)


def _oriented_gw(A, p, B, q, epsilon, tol, max_outer, max_inner, restarts, seed,
                 epsilon_start, decay, damping):
    rng = np.random.default_rng(seed)
    best = None
    for run in range(restarts + 1):
        if run == 0:
            T0 = np.outer(p, q)
        elif run == 1:
            # inputs are already in signature order
            r, c, m = _nw_corner(p, q)
            T0 = np.zeros((len(p), len(q)))
            np.add.at(T0, (r, c), m)
            # keep every entry positive so multiplicative updates can still move mass
            T0 = 0.9 * T0 + 0.1 * np.outer(p, q)
        else:
            T0 = _random_coupling(p, q, rng)
        T, converged, it, finite = _k.entropic_plan(A, B, p, q, T0, epsilon, tol, max_outer,
                                                    max_inner, epsilon_start, decay, damping)
        if not finite:
            raise NumericalError(f"non-finite entropic GW plan (epsilon={epsilon})")
        T = round_to_marginals(T, p, q)
        cost = _cost(A, B, T)
        if best is None or cost < best[0] - 1e-12:
            best = (cost, T, converged, it)
    return best


_ORDER_CACHE: "weakref.WeakKeyDictionary[MmSpace, np.ndarray]" = weakref.WeakKeyDictionary()


def canonical_order(a: MmSpace) -> np.ndarray:
    """:func:`signature_order` of a space, cached per (immutable) space object."""
    order = _ORDER_CACHE.get(a)
    if order is None:
        order = signature_order(a.dense(), a.measure)
        _ORDER_CACHE[a] = order
    return order


def signature_order(A: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Canonical node order from colour refinement (1-WL) on a weighted structure.

    Colours start from the point masses and are refined by the sorted
    multiset of ``(neighbour colour, edge weight)`` pairs until stable. Colour
    ids come from lexicographic sorting, so they do not depend on the input
    labeling; nodes are ordered by final colour, ties kept in input order.
    """
    n = len(p)
    wq = np.rint(np.asarray(A) * 1e9).astype(np.int64)
    colors = _rank_rows(np.rint(p * 1e12).astype(np.int64)[:, None])
    count = colors.max() + 1
    for _ in range(n):
        keys = np.sort(colors[None, :] * 2_000_000_000 + wq, axis=1)
        colors = _rank_rows(np.hstack([colors[:, None], keys]))
        new_count = colors.max() + 1
        if new_count == count:
            break
        count = new_count
    return np.argsort(colors, kind="stable")


def _rank_rows(rows: np.ndarray) -> np.ndarray:
    """Dense lexicographic rank of each row (equal rows share a rank)."""
    order = np.lexsort(rows.T[::-1])
    srt = rows[order]
    step = np.r_[0, np.any(srt[1:] != srt[:-1], axis=1).astype(np.int64)]
    ranks = np.empty(len(rows), dtype=np.int64)
    ranks[order] = np.cumsum(step)
    return ranks


def _random_coupling(p, q, rng, sigma=1.0, sweeps=50):
    T = np.outer(p, q) * np.exp(sigma * rng.standard_normal((len(p), len(q))))
    for _ in range(sweeps):
        T *= (p / T.sum(axis=1))[:, None]
        T *= (q / T.sum(axis=0))[None, :]
    return round_to_marginals(T, p, q)


# ---------------------------------------------------------------------------
# sliced GW


def spectral_embed(a: MmSpace, d: int = 8) -> np.ndarray:
    """Spectral coordinates ``v_j * sqrt(|lambda_j|)`` of the ``d`` largest-|lambda| eigenpairs.

    Each eigenvector is flipped so that its largest-magnitude entry (lowest
    index on ties) is positive. Columns beyond the rank are zero.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    n = a.size
    k = min(d, n)
    if a.is_sparse and n > 256 and k < n - 1:
        v0 = np.random.default_rng(0).standard_normal(n)
        vals, vecs = spla.eigsh(a.structure.astype(np.float64), k=k, which="LM", v0=v0)
    else:
        vals, vecs = np.linalg.eigh(a.dense())
    order = np.lexsort((-vals, -np.abs(vals)))[:k]
    vals, vecs = vals[order], vecs[:, order]
    scale = max(1.0, float(np.abs(vals).max()) if vals.size else 1.0)
    out = np.zeros((n, d))
    for j in range(k):
        if abs(vals[j]) <= 1e-10 * scale:
            continue
        v = vecs[:, j]
        mag = np.abs(v)
        pivot = int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])
        if v[pivot] < 0:
            v = -v
        out[:, j] = v * np.sqrt(abs(vals[j]))
    return out


def _nw_corner(p: np.ndarray, q: np.ndarray):
    """North-west-corner plan between two sorted supports as (rows, cols, mass)."""
    cp = np.cumsum(p)
    cq = np.cumsum(q)
    cp[-1] = cq[-1] = 1.0
    cuts = np.union1d(cp, cq)
    lo = np.r_[0.0, cuts[:-1]]
    mass = cuts - lo
    keep = mass > 0
    lo, mass = lo[keep], mass[keep]
    mid = lo + 0.5 * mass
    rows = np.minimum(np.searchsorted(cp, mid), len(p) - 1)
    cols = np.minimum(np.searchsorted(cq, mid), len(q) - 1)
    return rows, cols, mass


def gw_1d(x, px, y, py):
    """GW between weighted 1D point sets with distance structures ``|x_i - x_k|``.

    Evaluates the monotone and anti-monotone north-west-corner plans and
    returns ``(cost, rows, cols, mass)`` for the cheaper one. Supports must
    be sorted ascending. On a comonotone (or countermonotone) plan the
    objective reduces to ``2 Var x + 2 Var y - 4 |Cov_T(x, y)|``.
    """
    x, px, y, py = (np.asarray(v, dtype=np.float64) for v in (x, px, y, py))
    if x.size == 0 or y.size == 0:
        raise IntegrityError("empty support")
    mx, my = px @ x, py @ y
    var = 2.0 * (px @ (x - mx) ** 2) + 2.0 * (py @ (y - my) ** 2)
    best = None
    for flip in (False, True):
        if flip:
            r, c, m = _nw_corner(px, py[::-1])
            c = len(y) - 1 - c
        else:
            r, c, m = _nw_corner(px, py)
        cov = m @ ((x[r] - mx) * (y[c] - my))
        cost = max(var - 4.0 * abs(cov), 0.0)
        if best is None or cost < best[0] - 1e-15:
            best = (float(cost), r, c, m)
    return best


def gw_1d_coupling(x, px, y, py) -> tuple[float, Coupling]:
    cost, r, c, m = gw_1d(x, px, y, py)
    plan = np.zeros((len(x), len(y)))
    np.add.at(plan, (r, c), m)
    return cost, Coupling(plan, np.asarray(px, float), np.asarray(py, float))


def sliced_gw(a: MmSpace, b: MmSpace, slices: SliceSet, embed_a: np.ndarray | None = None,
              embed_b: np.ndarray | None = None, size_scaled: bool = True) -> GwResult:
    """Sliced GW on spectral coordinates.

    Both spaces are lifted with :func:`spectral_embed`, projected on every
    direction of ``slices`` and compared with :func:`gw_1d`. The cost is the
    mean over slices; the coupling is the average of the per-slice plans,
    repaired to the exact marginals. Precomputed (unscaled) embeddings may be
    passed to skip the eigendecomposition.

    Parameters
    ----------
    size_scaled : bool
        Multiply each space's coordinates by its support size. Eigenvector
        entries shrink like ``N^{-1/2}``, so unscaled slice costs mostly
        measure how small the two graphs are; scaling puts graphs of
        different sizes on a common footing.
    """
    d = slices.dim
    X = spectral_embed(a, d) if embed_a is None else embed_a
    Y = spectral_embed(b, d) if embed_b is None else embed_b
    if X.shape[1] != d or Y.shape[1] != d:
        raise IntegrityError(f"embedding dimension does not match slice dimension {d}")
    if size_scaled:
        X = X * a.size
        Y = Y * b.size
    p, q = a.measure, b.measure
    xs = X @ slices.directions.T
    ys = Y @ slices.directions.T
    ox = np.argsort(xs, axis=0, kind="stable")
    oy = np.argsort(ys, axis=0, kind="stable")
    total = 0.0
    rows, cols, masses = [], [], []
    for s in range(slices.count):
        ix, iy = ox[:, s], oy[:, s]
        cost, r, c, m = gw_1d(xs[ix, s], p[ix], ys[iy, s], q[iy])
        total += cost
        rows.append(ix[r])
        cols.append(iy[c])
        masses.append(m)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    masses = np.concatenate(masses) / slices.count
    if a.is_sparse or b.is_sparse:
        # every slice plan is feasible, so the average only needs float cleanup
        plan = sp.csr_matrix((masses, (rows, cols)), shape=(a.size, b.size))
        plan = _scale_rows_cols(plan, p, q)
    else:
        plan = np.zeros((a.size, b.size))
        np.add.at(plan, (rows, cols), masses)
        plan = round_to_marginals(_scale_rows_cols(plan, p, q), p, q)
    return GwResult(total / slices.count, Coupling(plan, p, q), True, slices.count)


def _scale_rows_cols(plan, p, q):
    rs = np.asarray(plan.sum(axis=1)).ravel()
    x = np.divide(p, rs, out=np.zeros_like(p), where=rs > 0)
    plan = sp.diags(x) @ plan if sp.issparse(plan) else plan * x[:, None]
    cs = np.asarray(plan.sum(axis=0)).ravel()
    y = np.divide(q, cs, out=np.zeros_like(q), where=cs > 0)
    return (plan @ sp.diags(y)).tocsr() if sp.issparse(plan) else plan * y[None, :]


SOLVERS = ("entropic", "sliced", "exact")
