"""Bounded-variable revised simplex with Bland's rule.

Problems are stated as::

    min/max  c @ x
    s.t.     row_lb <= A @ x <= row_ub      (equal entries give an equality)
             lb <= x <= ub                  (+-inf allowed)

Internally every row gets an activity variable r_i with A_i x - r_i = 0 and
row_lb_i <= r_i <= row_ub_i, variables are shifted/negated/split so that all
live in [0, u], and a two-phase method with artificials finds a start basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    row_lb: np.ndarray
    row_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    sense: str = "min"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        m = A.shape[0]
        fields = {
            "c": c, "A": A,
            "row_lb": np.broadcast_to(np.asarray(self.row_lb, dtype=float), (m,)).copy(),
            "row_ub": np.broadcast_to(np.asarray(self.row_ub, dtype=float), (m,)).copy(),
            "lb": np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy(),
            "ub": np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy(),
        }
        for k, v in fields.items():
            object.__setattr__(self, k, v)
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if not (np.isfinite(c).all() and np.isfinite(A).all()):
            raise ValueError("objective and constraint coefficients must be finite")
        if (self.row_lb > self.row_ub).any() or (self.lb > self.ub).any():
            raise ValueError("a lower bound exceeds its upper bound")
        if np.isnan(self.row_lb).any() or np.isnan(self.row_ub).any() \
                or np.isnan(self.lb).any() or np.isnan(self.ub).any():
            raise ValueError("bounds must not be NaN")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_standard(cls, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(0, np.inf),
                      sense="min"):
        """Build from the familiar inequality/equality split."""
        c = np.asarray(c, dtype=float)
        n = c.size
        blocks, lo, hi = [], [], []
        if A_ub is not None and len(A_ub):
            A_ub = np.asarray(A_ub, dtype=float).reshape(-1, n)
            blocks.append(A_ub)
            lo.append(np.full(A_ub.shape[0], -np.inf))
            hi.append(np.asarray(b_ub, dtype=float))
        if A_eq is not None and len(A_eq):
            A_eq = np.asarray(A_eq, dtype=float).reshape(-1, n)
            blocks.append(A_eq)
            lo.append(np.asarray(b_eq, dtype=float))
            hi.append(np.asarray(b_eq, dtype=float))
        A = np.vstack(blocks) if blocks else np.zeros((0, n))
        bounds = np.asarray(bounds, dtype=float)
        if bounds.ndim == 1:
            bounds = np.tile(bounds, (n, 1))
        return cls(c, A, np.concatenate(lo) if lo else np.zeros(0),
                   np.concatenate(hi) if hi else np.zeros(0), bounds[:, 0], bounds[:, 1], sense)

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float))

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        ax = self.A @ x if self.m else np.zeros(0)
        parts = [np.maximum(self.lb - x, 0), np.maximum(x - self.ub, 0),
                 np.maximum(self.row_lb - ax, 0), np.maximum(ax - self.row_ub, 0)]
        return float(max((p.max() if p.size else 0.0) for p in parts))


@dataclass(frozen=True)
class LpSolution:
    status: str
    x: np.ndarray
    objective: float
    iterations: int = 0
    # multipliers for min-form (c, or -c when maximising): reduced = c_min - A.T @ duals
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


# -- compiled core -----------------------------------------------------------

@njit(cache=True)
def _refactor(A, basis, b, u, at_upper):
    m = A.shape[0]
    B = np.empty((m, m))
    for i in range(m):
        B[:, i] = A[:, basis[i]]
    Binv = np.ascontiguousarray(np.linalg.inv(B))
    rhs = b.copy()
    for j in range(A.shape[1]):
        if at_upper[j]:
            for i in range(m):
                rhs[i] -= A[i, j] * u[j]
    return Binv, Binv @ rhs


@njit(cache=True)
def _simplex(A, b, c, u, basis, at_upper, max_iter, tol):
    """Bland-rule bounded simplex from a primal feasible basis.

    Returns (status, iterations, Binv, xB): 0 optimal, 1 unbounded, 2 iteration limit.
    """
    m, n = A.shape
    At = np.ascontiguousarray(A.T)
    in_basis = np.full(n, -1)
    for i in range(m):
        in_basis[basis[i]] = i
    Binv, xB = _refactor(A, basis, b, u, at_upper)
    it = 0
    since = 0
    while it < max_iter:
        cB = np.empty(m)
        for i in range(m):
            cB[i] = c[basis[i]]
        pi = cB @ Binv
        q = -1
        direction = 0
        for j in range(n):
            if in_basis[j] >= 0 or u[j] <= tol:
                continue
            d = c[j] - pi @ At[j]
            if not at_upper[j] and d < -tol:
                q = j
                direction = 1
                break
            if at_upper[j] and d > tol:
                q = j
                direction = -1
                break
        if q < 0:
            return 0, it, Binv, xB
        alpha = Binv @ At[q]
        # basic values move by -direction * alpha * theta
        theta = np.inf
        leave = -1
        leave_to_upper = False
        for i in range(m):
            delta = -direction * alpha[i]
            bi = basis[i]
            if delta < -tol:
                ratio = max(xB[i], 0.0) / (-delta)
                to_upper = False
            elif delta > tol and u[bi] < np.inf:
                ratio = max(u[bi] - xB[i], 0.0) / delta
                to_upper = True
            else:
                continue
            if leave < 0 or ratio < theta - tol or (ratio <= theta + tol and bi < basis[leave]):
                theta = ratio
                leave = i
                leave_to_upper = to_upper
        if u[q] <= theta:
            # bound flip strictly improves the objective, so it cannot cycle
            theta = u[q]
            leave = -1
        if theta == np.inf:
            return 1, it, Binv, xB
        it += 1
        xB -= direction * alpha * theta
        if leave < 0:
            at_upper[q] = not at_upper[q]
            continue
        out = basis[leave]
        enter_val = theta if direction == 1 else u[q] - theta
        # pivot
        piv = alpha[leave]
        Binv[leave, :] /= piv
        for i in range(m):
            if i != leave and alpha[i] != 0.0:
                Binv[i, :] -= alpha[i] * Binv[leave, :]
        xB[leave] = enter_val
        basis[leave] = q
        in_basis[q] = leave
        in_basis[out] = -1
        at_upper[out] = leave_to_upper
        at_upper[q] = False
        since += 1
        if since >= 50:
            Binv, xB = _refactor(A, basis, b, u, at_upper)
            since = 0
    return 2, it, Binv, xB


# -- Python front end ------------------------------------------------------------

def _to_internal(p: LpProblem):
    """Map to min c'y, A y = b, 0 <= y <= u.  Returns arrays plus a recovery map."""
    c = p.c if p.sense == "min" else -p.c
    n, m = p.n, p.m
    cols, costs, caps = [], [], []
    # recover x_j = offset_j + sum_k coef_jk y_k
    recover = []
    b = np.zeros(m)
    for j in range(n):
        lo, hi = p.lb[j], p.ub[j]
        a = p.A[:, j]
        if np.isfinite(lo):
            b -= a * lo
            recover.append((lo, [(len(cols), 1.0)]))
            cols.append(a)
            costs.append(c[j])
            caps.append(hi - lo)
        elif np.isfinite(hi):
            b -= a * hi
            recover.append((hi, [(len(cols), -1.0)]))
            cols.append(-a)
            costs.append(-c[j])
            caps.append(np.inf)
        else:
            recover.append((0.0, [(len(cols), 1.0), (len(cols) + 1, -1.0)]))
            cols += [a, -a]
            costs += [c[j], -c[j]]
            caps += [np.inf, np.inf]
    for i in range(m):
        lo, hi = p.row_lb[i], p.row_ub[i]
        e = np.zeros(m)
        e[i] = -1.0
        if np.isfinite(lo):
            b[i] += lo  # A x - (lo + y) = 0
            cols.append(e)
            caps.append(hi - lo)
        elif np.isfinite(hi):
            b[i] += hi  # A x - (hi - y) = 0
            cols.append(-e)
            caps.append(np.inf)
        else:
            cols += [e, -e]
            caps += [np.inf, np.inf]
            costs.append(0.0)
        costs.append(0.0)
    A = np.column_stack(cols) if cols else np.zeros((m, 0))
    return A, b, np.array(costs, dtype=float), np.array(caps, dtype=float), recover, c


def solve_lp(p: LpProblem, max_iter: int = 100_000, tol: float = TOL) -> LpSolution:
    A, b, cost, cap, recover, c_min = _to_internal(p)
    m, nv = A.shape
    n = p.n

    def build_x(y):
        x = np.empty(n)
        for j, (off, terms) in enumerate(recover):
            x[j] = off + sum(coef * y[k] for k, coef in terms)
        return x

    if m == 0:
        y = np.where(cost < -tol, cap, 0.0)
        if np.isinf(y).any():
            return LpSolution(UNBOUNDED, np.full(n, np.nan), np.nan)
        x = build_x(y)
        return LpSolution(OPTIMAL, x, p.objective(x), 0, np.zeros(0), c_min.copy())

    sign = np.where(b < 0, -1.0, 1.0)
    A1 = A * sign[:, None]
    b1 = b * sign
    Af = np.hstack([A1, np.eye(m)])
    uf = np.concatenate([cap, np.full(m, np.inf)])
    at_upper = np.zeros(nv + m, dtype=np.bool_)
    basis = np.arange(nv, nv + m)
    c1 = np.concatenate([np.zeros(nv), np.ones(m)])
    status, it1, Binv, xB = _simplex(Af, b1, c1, uf, basis, at_upper, max_iter, tol)
    if status == 2:
        return LpSolution(ITERATION_LIMIT, np.full(n, np.nan), np.nan, it1)
    infeas = float(np.sum(xB[basis >= nv]))
    scale = max(1.0, float(np.abs(b1).max()))
    if infeas > 1e-8 * scale:
        return LpSolution(INFEASIBLE, np.full(n, np.nan), np.nan, it1)
    # phase II: artificials pinned at zero
    uf[nv:] = 0.0
    at_upper[nv:] = False
    c2 = np.concatenate([cost, np.zeros(m)])
    status, it2, Binv, xB = _simplex(Af, b1, c2, uf, basis, at_upper, max_iter, tol)
    its = it1 + it2
    if status == 1:
        return LpSolution(UNBOUNDED, np.full(n, np.nan), np.nan, its)
    if status == 2:
        return LpSolution(ITERATION_LIMIT, np.full(n, np.nan), np.nan, its)
    y = np.where(at_upper, uf, 0.0)
    y[basis] = xB
    y = y[:nv]
    # clean tiny bound violations from round-off
    y = np.clip(y, 0.0, cap)
    x = build_x(y)
    pi = (c2[basis] @ Binv) * sign
    reduced = c_min - p.A.T @ pi
    return LpSolution(OPTIMAL, x, p.objective(x), its, pi, reduced)


def kkt_residual(p: LpProblem, sol: LpSolution, tol: float = 1e-7) -> float:
    """Largest violation of primal feasibility, dual sign conditions and complementarity."""
    x = sol.x
    viol = p.max_violation(x)
    y = sol.duals
    d = sol.reduced_costs
    scale = max(1.0, float(np.abs(p.c).max(initial=0)))
    worst = viol
    for j in range(p.n):
        at_lo = np.isfinite(p.lb[j]) and x[j] - p.lb[j] <= tol * max(1.0, abs(p.lb[j]))
        at_hi = np.isfinite(p.ub[j]) and p.ub[j] - x[j] <= tol * max(1.0, abs(p.ub[j]))
        if at_lo and at_hi:
            continue
        if at_lo:
            worst = max(worst, -d[j] / scale)
        elif at_hi:
            worst = max(worst, d[j] / scale)
        else:
            worst = max(worst, abs(d[j]) / scale)
    ax = p.A @ x if p.m else np.zeros(0)
    for i in range(p.m):
        at_lo = np.isfinite(p.row_lb[i]) and ax[i] - p.row_lb[i] <= tol * max(1.0, abs(p.row_lb[i]))
        at_hi = np.isfinite(p.row_ub[i]) and p.row_ub[i] - ax[i] <= tol * max(1.0, abs(p.row_ub[i]))
        if at_lo and at_hi:
            continue
        if at_lo:
            worst = max(worst, -y[i] / scale)
        elif at_hi:
            worst = max(worst, y[i] / scale)
        else:
            worst = max(worst, abs(y[i]) / scale)
    return float(worst)
