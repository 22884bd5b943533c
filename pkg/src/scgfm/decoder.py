"""Two-layer ReLU decoder from structural coordinates to graph statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import STAT_DIM


@dataclass(frozen=True, eq=False)
class Decoder:
    w1: np.ndarray  # (hidden, K)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (r, hidden)
    b2: np.ndarray  # (r,)

    def __post_init__(self):
        h, k = self.w1.shape
        r = self.w2.shape[0]
        if self.b1.shape != (h,) or self.w2.shape != (r, h) or self.b2.shape != (r,):
            raise ValueError("inconsistent decoder parameter shapes")
        for p in self.params():
            if not np.all(np.isfinite(p)):
                raise ValueError("non-finite decoder parameters")

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def params(self) -> tuple[np.ndarray, ...]:
        return self.w1, self.b1, self.w2, self.b2

    @classmethod
    def from_params(cls, params) -> "Decoder":
        return cls(*(np.array(p, dtype=np.float64) for p in params))


def init_decoder(k: int, seed: int, hidden: int = 64, r: int = STAT_DIM) -> Decoder:
    """Uniform ``+-1/sqrt(fan_in)`` initialization."""
    rng = np.random.default_rng(seed)
    s1, s2 = 1.0 / np.sqrt(k), 1.0 / np.sqrt(hidden)
    return Decoder(rng.uniform(-s1, s1, (hidden, k)), rng.uniform(-s1, s1, hidden),
                   rng.uniform(-s2, s2, (r, hidden)), rng.uniform(-s2, s2, r))


def decode(d: Decoder, w: np.ndarray) -> np.ndarray:
    """``w2 relu(w1 w + b1) + b2``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (d.in_dim,):
        raise ValueError(f"expected input of length {d.in_dim}, got shape {w.shape}")
    return d.w2 @ np.maximum(d.w1 @ w + d.b1, 0.0) + d.b2


def decode_backward(d: Decoder, w: np.ndarray, upstream: np.ndarray):
    """Gradients of ``upstream . decode(d, w)``.

    Returns
    -------
    grads : tuple of ndarray
        Gradients for ``(w1, b1, w2, b2)``.
    grad_w : ndarray
        Gradient with respect to the input, length ``K``.
    """
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    if w.shape != (d.in_dim,) or g.shape != (d.out_dim,):
        raise ValueError("input or upstream gradient has the wrong shape")
    pre = d.w1 @ w + d.b1
    h = np.maximum(pre, 0.0)
    gh = (d.w2.T @ g) * (pre > 0)  # ReLU'(0) = 0
    grads = (np.outer(gh, w), gh, np.outer(g, h), g.copy())
    return grads, d.w1.T @ gh


def spectral_norm(m: np.ndarray, steps: int = 100, tol: float = 1e-8) -> float:
    """Largest singular value by power iteration on ``m^T m``.

    Stops after ``steps`` iterations or once the relative change drops
    below ``tol``. The estimate approaches the true value from below.
    """
    m = np.asarray(m, dtype=np.float64)
    if not np.any(m):
        return 0.0
    v = np.random.default_rng(0).standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(steps):
        u = m.T @ (m @ v)
        nu = np.linalg.norm(u)
        if nu == 0:
            return 0.0
        v = u / nu
        new = float(np.sqrt(nu))
        done = abs(new - sigma) <= tol * new
        sigma = new
        if done:
            break
    return sigma


def lipschitz_bound(d: Decoder) -> float:
    """``||w2||_2 ||w1||_2``, an upper bound on the decoder's Lipschitz constant."""
    return spectral_norm(d.w2) * spectral_norm(d.w1)
