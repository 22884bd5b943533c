"""Compiled inner loops for entropic GW (numba)."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _lse(v):
    m = -np.inf
    for x in v:
        if x > m:
            m = x
    if m == -np.inf:
        return m
    s = 0.0
    for x in v:
        s += np.exp(x - m)
    return m + np.log(s)


@njit(cache=True, nogil=True)
def sinkhorn_log(logp, logq, p, cost, eps, tol, max_iter, f, g):
    """In-place log-domain Sinkhorn on potentials ``f``, ``g``; returns (plan, converged, iters)."""
    n, m = cost.shape
    row = np.empty(m)
    col = np.empty(n)
    plan = np.empty((n, m))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for i in range(n):
            for j in range(m):
                row[j] = (g[j] - cost[i, j]) / eps
            f[i] = eps * logp[i] - eps * _lse(row)
        for j in range(m):
            for i in range(n):
                col[i] = (f[i] - cost[i, j]) / eps
            g[j] = eps * logq[j] - eps * _lse(col)
        err = 0.0
        for i in range(n):
            s = 0.0
            for j in range(m):
                v = np.exp((f[i] + g[j] - cost[i, j]) / eps)
                plan[i, j] = v
                s += v
            d = abs(s - p[i])
            if not np.isfinite(d):
                err = np.inf
                break
            if d > err:
                err = d
        if not np.isfinite(err):
            break
        if err < tol:
            converged = True
            break
    return plan, converged, it


@njit(cache=True, nogil=True)
def _kernel(f, g, cost, eps):
    n, m = cost.shape
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            K[i, j] = np.exp((f[i] + g[j] - cost[i, j]) / eps)
    return K


@njit(cache=True, nogil=True)
def sinkhorn_stabilized(logp, logq, p, q, cost, eps, tol, max_iter, f, g):
    """Scaling-domain Sinkhorn with absorption of the scalings into ``f``, ``g``.

    Iterates ``u = p / K v``, ``v = q / K^T u`` on the kernel
    ``K = exp((f + g - C) / eps)``. Whenever a scaling leaves [1e-100, 1e100]
    it is absorbed into the log potentials and the kernel is rebuilt, so no
    quantity under- or overflows. Falls back to log-domain sweeps if a kernel
    row or column vanishes. Updates ``f``, ``g`` in place; returns
    ``(plan, converged, iters)``.
    """
    n, m = cost.shape
    K = _kernel(f, g, cost, eps)
    u = np.ones(n)
    v = np.ones(m)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Kv = K @ v
        err = 0.0
        for i in range(n):
            d = abs(u[i] * Kv[i] - p[i])
            if d > err:
                err = d
        if err < tol and it > 1:
            converged = True
            break
        bad = False
        for i in range(n):
            if p[i] > 0:
                if Kv[i] <= 0.0:
                    bad = True
                    break
                u[i] = p[i] / Kv[i]
            else:
                u[i] = 0.0
        if bad:
            break
        Ktu = K.T @ u
        for j in range(m):
            if q[j] > 0:
                if Ktu[j] <= 0.0:
                    bad = True
                    break
                v[j] = q[j] / Ktu[j]
            else:
                v[j] = 0.0
        if bad:
            break
        big = False
        for i in range(n):
            if u[i] > 1e100 or (u[i] < 1e-100 and p[i] > 0):
                big = True
        for j in range(m):
            if v[j] > 1e100 or (v[j] < 1e-100 and q[j] > 0):
                big = True
        if big:
            _absorb(f, g, u, v, eps)
            K = _kernel(f, g, cost, eps)
            u[:] = 1.0
            v[:] = 1.0
    if bad:
        _absorb(f, g, u, v, eps)
        plan, converged, it2 = sinkhorn_log(logp, logq, p, cost, eps, tol, max_iter, f, g)
        return plan, converged, it + it2
    _absorb(f, g, u, v, eps)
    return _kernel(f, g, cost, eps), converged, it


@njit(cache=True, nogil=True)
def _absorb(f, g, u, v, eps):
    for i in range(len(f)):
        f[i] += eps * np.log(u[i])
    for j in range(len(g)):
        g[j] += eps * np.log(v[j])


@njit(cache=True, nogil=True)
def entropic_plan(A, B, p, q, T0, eps, tol, max_outer, max_inner, eps0=0.0, decay=1.0,
                  damping=1.0):
    """Entropic GW fixed-point iteration from plan ``T0``.

    The regularization starts at ``max(eps, eps0)`` and shrinks by ``decay``
    per outer step until it reaches ``eps``; convergence is only declared at
    the target ``eps``. Returns ``(plan, converged, outer_iterations, finite)``.
    """
    n = A.shape[0]
    m = B.shape[0]
    ap = (A * A) @ p
    bq = (B * B) @ q
    const = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            const[i, j] = ap[i] + bq[j]
    logp = np.log(p)
    logq = np.log(q)
    f = np.zeros(n)
    g = np.zeros(m)
    T = T0.copy()
    converged = False
    finite = True
    it = 0
    eps_now = max(eps, eps0)
    for it in range(1, max_outer + 1):
        cost = const - 2.0 * (A @ T) @ B.T
        Tn, _, _ = sinkhorn_stabilized(logp, logq, p, q, cost, eps_now, tol, max_inner, f, g)
        if damping < 1.0:
            Tn = damping * Tn + (1.0 - damping) * T
        delta = 0.0
        for i in range(n):
            for j in range(m):
                d = abs(Tn[i, j] - T[i, j])
                if not np.isfinite(d):
                    finite = False
                if d > delta:
                    delta = d
        T = Tn
        if not finite:
            break
        if delta < tol and eps_now <= eps:
            converged = True
            break
        eps_now = max(eps, eps_now * decay)
    return T, converged, it, finite

