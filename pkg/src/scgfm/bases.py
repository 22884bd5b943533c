"""Dictionary of geometric bases, structural coordinates and the diversity hinge."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ot
from .errors import NumericalError, ScgfmError
from .graph import MmSpace


@dataclass(frozen=True, eq=False)
class BaseDictionary:
    """``K`` bases of ``M`` points each, stored as one ``(K, M, M)`` array.

    Every base is symmetric, hollow and bounded in ``[0, 1]``; all bases
    carry the uniform measure ``1/M``.
    """

    bases: np.ndarray
    temperature: float = 0.3
    margin: float = 10.0

    def __post_init__(self):
        b = np.asarray(self.bases, dtype=np.float64)
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ValueError(f"bases must have shape (K, M, M), got {b.shape}")
        if b.shape[0] < 1 or b.shape[1] < 2:
            raise ValueError("need K >= 1 and M >= 2")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "bases", b)

    @property
    def k(self) -> int:
        return self.bases.shape[0]

    @property
    def m(self) -> int:
        return self.bases.shape[1]

    @property
    def base_measure(self) -> np.ndarray:
        return np.full(self.m, 1.0 / self.m)

    def space(self, k: int) -> MmSpace:
        return MmSpace.uniform(self.bases[k])

    def spaces(self) -> list[MmSpace]:
        return [self.space(k) for k in range(self.k)]

    def with_bases(self, bases: np.ndarray) -> "BaseDictionary":
        return BaseDictionary(bases, self.temperature, self.margin)

    def satisfies_constraints(self) -> bool:
        b = self.bases
        hollow = np.all(np.diagonal(b, axis1=1, axis2=2) == 0)
        return bool(np.array_equal(b, b.transpose(0, 2, 1)) and hollow
                    and b.min() >= 0 and b.max() <= 1)


@dataclass(frozen=True, eq=False)
class CoordinateResult:
    weights: np.ndarray
    deltas: np.ndarray
    couplings: list = field(default_factory=list)


def init_dictionary(k: int, m: int, seed: int, temperature: float = 0.3,
                    margin: float = 10.0) -> BaseDictionary:
    """Random bases with upper-triangle entries uniform on ``[0, 1]``."""
    if k < 1 or m < 2:
        raise ValueError("need k >= 1 and m >= 2")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(m, 1)
    b = np.zeros((k, m, m))
    for i in range(k):
        b[i][iu] = rng.random(len(iu[0]))
        b[i] += b[i].T
    return BaseDictionary(b, temperature, margin)


def project_constraints(b: np.ndarray) -> np.ndarray:
    """Symmetrize, zero the diagonal and clamp to ``[0, 1]``.

    Works on one ``(M, M)`` matrix or a ``(K, M, M)`` stack. Idempotent.
    """
    b = np.asarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise NumericalError("non-finite base entries")
    out = 0.5 * (b + np.swapaxes(b, -1, -2))
    i = np.arange(b.shape[-1])
    out[..., i, i] = 0.0
    return np.clip(out, 0.0, 1.0)


def softmax_weights(deltas: np.ndarray, temperature: float) -> np.ndarray:
    """``softmax(-deltas / temperature)`` with max-shift for stability."""
    z = -np.asarray(deltas, dtype=np.float64) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def solve(a: MmSpace, b: MmSpace, solver: str = "entropic",
          slices: ot.SliceSet | None = None, **options) -> ot.GwResult:
    """Dispatch to one of :data:`scgfm.ot.SOLVERS`."""
    if solver == "entropic":
        return ot.entropic_gw(a, b, **options)
    if solver == "sliced":
        if slices is None:
            slices = ot.SliceSet.make(50, 8, 0)
        return ot.sliced_gw(a, b, slices, **options)
    if solver == "exact":
        return ot.exact_gw(a, b)
    raise ValueError(f"unknown solver {solver!r}; expected one of {ot.SOLVERS}")


def structural_coordinates(a: MmSpace, dictionary: BaseDictionary, solver: str = "entropic",
                           slices: ot.SliceSet | None = None, **options) -> CoordinateResult:
    """GW discrepancies to every base and the softmax coordinates they induce.

    The couplings are kept so feature projection can reuse them.
    """
    deltas = np.empty(dictionary.k)
    couplings = []
    for k in range(dictionary.k):
        try:
            res = solve(a, dictionary.space(k), solver, slices, **options)
        except ScgfmError as exc:
            raise type(exc)(f"base {k}: {exc}") from exc
        deltas[k] = res.cost
        couplings.append(res.coupling)
    return CoordinateResult(softmax_weights(deltas, dictionary.temperature), deltas, couplings)


def linear_surrogate(dictionary: BaseDictionary, weights: np.ndarray) -> np.ndarray:
    """Convex combination ``sum_k w_k B_k`` standing in for a GW barycenter."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (dictionary.k,):
        raise ValueError(f"expected {dictionary.k} weights, got shape {w.shape}")
    return np.tensordot(w, dictionary.bases, axes=1)


def diversity_loss(dictionary: BaseDictionary) -> tuple[float, np.ndarray]:
    """Mean hinge ``max(0, m - ||B_i - B_j||_F)`` over pairs ``i < j``.

    Returns the loss and its subgradient as a ``(K, M, M)`` array. Pairs at
    or beyond the margin and pairs at distance zero contribute no gradient.
    """
    b = dictionary.bases
    k = dictionary.k
    grad = np.zeros_like(b)
    if k < 2:
        return 0.0, grad
    npairs = k * (k - 1) // 2
    loss = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            diff = b[i] - b[j]
            dist = float(np.sqrt(np.sum(diff * diff)))
            if dist < dictionary.margin:
                loss += dictionary.margin - dist
                if dist > 0:
                    g = diff / (dist * npairs)
                    grad[i] -= g
                    grad[j] += g
    return loss / npairs, grad
