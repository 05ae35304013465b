"""Brute-force LP optimum by enumerating basic feasible points.

Only meant for tiny bounded problems; used to certify the simplex solver.
Equalities are eliminated through a nullspace parametrisation x = x0 + N t so
that a vertex is fixed by choosing ``dim(t)`` active inequalities.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .lp import LpProblem


def _split(p: LpProblem):
    eq_rows, eq_rhs, g_rows, g_rhs = [], [], [], []
    eye = np.eye(p.n)
    for i in range(p.m):
        lo, hi = p.row_lb[i], p.row_ub[i]
        if lo == hi:
            eq_rows.append(p.A[i])
            eq_rhs.append(lo)
            continue
        if np.isfinite(hi):
            g_rows.append(p.A[i])
            g_rhs.append(hi)
        if np.isfinite(lo):
            g_rows.append(-p.A[i])
            g_rhs.append(-lo)
    for j in range(p.n):
        lo, hi = p.lb[j], p.ub[j]
        if lo == hi:
            eq_rows.append(eye[j])
            eq_rhs.append(lo)
            continue
        if np.isfinite(hi):
            g_rows.append(eye[j])
            g_rhs.append(hi)
        if np.isfinite(lo):
            g_rows.append(-eye[j])
            g_rhs.append(-lo)
    E = np.array(eq_rows).reshape(-1, p.n)
    G = np.array(g_rows).reshape(-1, p.n)
    return E, np.array(eq_rhs, dtype=float), G, np.array(g_rhs, dtype=float)


def vertex_optimum(p: LpProblem, tol: float = 1e-9, chunk: int = 20_000):
    """Return (best objective, argmax/argmin point) or (None, None) if infeasible."""
    E, e, G, h = _split(p)
    n = p.n
    if E.shape[0]:
        x0, *_ = np.linalg.lstsq(E, e, rcond=None)
        if np.abs(E @ x0 - e).max() > 1e-8 * max(1.0, np.abs(e).max()):
            return None, None
        _, s, vt = np.linalg.svd(E)
        rank = int((s > 1e-10 * s.max()).sum()) if s.size else 0
        N = vt[rank:].T
    else:
        x0 = np.zeros(n)
        N = np.eye(n)
    d = N.shape[1]
    GN = G @ N
    hr = h - G @ x0
    scale = max(1.0, float(np.abs(h).max(initial=0.0)))
    best_val, best_x = None, None
    better = (lambda a, b: a > b) if p.sense == "max" else (lambda a, b: a < b)

    def consider(points):
        nonlocal best_val, best_x
        xs = x0[None, :] + points @ N.T
        ok = ((GN @ points.T).T <= hr[None, :] + tol * scale).all(axis=1)
        for x in xs[ok]:
            val = p.objective(x)
            if best_val is None or better(val, best_val):
                best_val, best_x = val, x

    if d == 0:
        consider(np.zeros((1, 0)))
        return best_val, best_x
    combos = combinations(range(G.shape[0]), d)
    while True:
        block = np.array(list(_take(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        M = GN[block]
        rhs = hr[block]
        det = np.linalg.det(M)
        good = np.abs(det) > 1e-10
        if good.any():
            t = np.linalg.solve(M[good], rhs[good][..., None])[..., 0]
            consider(t)
    return best_val, best_x


def _take(it, k):
    for _ in range(k):
        try:
            yield next(it)
        except StopIteration:
            return
