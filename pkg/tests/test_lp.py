from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from regimecast.dispatch.lp import LpProblem, kkt_residual, solve_lp
from regimecast.dispatch.vertex import vertex_optimum


def random_bounded_lp(rng, n=None, m=None):
    """Feasible LP whose region is bounded, mixing bound and row types."""
    n = n or int(rng.integers(2, 11))
    m = m if m is not None else int(rng.integers(1, 6))
    lb = rng.uniform(-5, 0, n)
    ub = lb + rng.uniform(0.5, 6, n)
    x_star = rng.uniform(lb, ub)
    A, lo, hi = [], [], []
    for _ in range(m):
        a = rng.normal(0, 1, n) * (rng.random(n) < 0.7)
        v = a @ x_star
        kind = rng.integers(4)
        if kind == 0:
            lo.append(v), hi.append(v)
        elif kind == 1:
            lo.append(-np.inf), hi.append(v + rng.uniform(0, 2))
        elif kind == 2:
            lo.append(v - rng.uniform(0, 2)), hi.append(np.inf)
        else:
            lo.append(v - rng.uniform(0, 2)), hi.append(v + rng.uniform(0, 2))
        A.append(a)
    # exercise the internal transforms: some variables lose a bound, a row restores it
    for j in range(n):
        r = rng.random()
        if r < 0.15:
            a = np.zeros(n)
            a[j] = 1.0
            A.append(a), lo.append(lb[j]), hi.append(np.inf)
            lb[j] = -np.inf
        elif r < 0.25:
            a = np.zeros(n)
            a[j] = 1.0
            A.append(a), lo.append(lb[j]), hi.append(ub[j])
            lb[j], ub[j] = -np.inf, np.inf
    c = rng.normal(0, 1, n)
    sense = "max" if rng.random() < 0.5 else "min"
    return LpProblem(c, np.array(A), np.array(lo), np.array(hi), lb, ub, sense)


def test_single_variable_max():
    sol = solve_lp(LpProblem.from_standard([1.0], [[1.0]], [3.0], sense="max"))
    assert sol.ok and sol.x[0] == pytest.approx(3.0)


def test_bland_terminates_on_cycling_example():
    # classic instance on which largest-coefficient pricing cycles
    c = [-0.75, 20, -0.5, 6]
    A = [[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]]
    sol = solve_lp(LpProblem.from_standard(c, A, [0, 0, 1]))
    assert sol.ok
    assert sol.objective == pytest.approx(-1.25)


def test_redundant_constraints():
    A = [[1, 1], [1, 1], [2, 2], [1, 0]]
    sol = solve_lp(LpProblem.from_standard([-1, -1], A_eq=[[1, 1], [2, 2]], b_eq=[4, 8],
                                           A_ub=A, b_ub=[4, 4, 8, 3]))
    assert sol.ok
    assert sol.objective == pytest.approx(-4.0)
    assert kkt_residual(LpProblem.from_standard([-1, -1], A_eq=[[1, 1], [2, 2]], b_eq=[4, 8],
                                                A_ub=A, b_ub=[4, 4, 8, 3]), sol) < 1e-7


def test_infeasible_and_unbounded():
    p = LpProblem([1.0], [[1.0], [1.0]], [1.0, -np.inf], [np.inf, 0.0], [-np.inf], [np.inf])
    assert solve_lp(p).status == "infeasible"
    assert solve_lp(LpProblem([1.0], np.zeros((0, 1)), [], [], [0.0], [np.inf],
                              "max")).status == "unbounded"
    assert solve_lp(LpProblem.from_standard([1.0, 1.0], [[-1.0, 1.0]], [1.0],
                                            sense="max")).status == "unbounded"


def test_no_rows():
    p = LpProblem([1.0, -2.0], np.zeros((0, 2)), [], [], [-1.0, 0.0], [1.0, 3.0])
    sol = solve_lp(p)
    assert sol.ok
    np.testing.assert_allclose(sol.x, [-1.0, 3.0])


def test_rejects_nonfinite_coefficients():
    with pytest.raises(ValueError):
        LpProblem([np.nan], [[1.0]], [0.0], [1.0], [0.0], [1.0])


def _vertex_count(p):
    n_eq = int((p.row_lb == p.row_ub).sum() + (p.lb == p.ub).sum())
    n_ineq = int(np.isfinite(p.row_lb).sum() + np.isfinite(p.row_ub).sum()
                 + np.isfinite(p.lb).sum() + np.isfinite(p.ub).sum()) - 2 * n_eq
    return comb(n_ineq, max(p.n - n_eq, 0))


@pytest.mark.parametrize("seed", range(20))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    p = random_bounded_lp(rng)
    while _vertex_count(p) > 200_000:  # keep the brute force cheap
        p = random_bounded_lp(rng)
    sol = solve_lp(p)
    best, _ = vertex_optimum(p)
    assert sol.ok
    assert sol.objective == pytest.approx(best, abs=1e-6)
    assert p.max_violation(sol.x) < 1e-7
    assert kkt_residual(p, sol) < 1e-7


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_matches_highs(seed):
    rng = np.random.default_rng(seed)
    p = random_bounded_lp(rng, n=int(rng.integers(2, 30)), m=int(rng.integers(0, 20)))
    sol = solve_lp(p)
    sign = -1.0 if p.sense == "max" else 1.0
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for a, lo, hi in zip(p.A, p.row_lb, p.row_ub):
        if lo == hi:
            A_eq.append(a), b_eq.append(lo)
            continue
        if np.isfinite(hi):
            A_ub.append(a), b_ub.append(hi)
        if np.isfinite(lo):
            A_ub.append(-a), b_ub.append(-lo)
    ref = linprog(sign * p.c, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
                  bounds=list(zip(p.lb, p.ub)), method="highs")
    assert ref.status == 0 and sol.ok
    assert sol.objective == pytest.approx(sign * ref.fun, abs=1e-6, rel=1e-9)
    assert kkt_residual(p, sol) < 1e-7


def test_duals_certify_optimality():
    # max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3
    p = LpProblem.from_standard([3, 2], [[1, 1], [1, 3]], [4, 6], bounds=[(0, 3), (0, np.inf)],
                                sense="max")
    sol = solve_lp(p)
    np.testing.assert_allclose(sol.x, [3, 1], atol=1e-12)
    # min-form multipliers: row 1 binding with price 2, row 2 slack
    np.testing.assert_allclose(sol.duals, [-2.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(sol.reduced_costs, [-1.0, 0.0], atol=1e-12)
