"""Battery dispatch strategies (Cases I-IV), perfect foresight and realized value.

Cases I-III share the variables [x+ (T), x- (T), s (T+1)] and maximise profit;
Case IV uses [x_gb (T), x_bl (T), x_bg (T), s (T+1)] and minimises cost.
Efficiency accounting is taken literally from the objective: charging
cost is p x+/eta_c while the SoC gains eta_c x+.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lp import OPTIMAL, LpProblem, LpSolution, solve_lp

CASES = ("I", "II", "III", "IV")


class DispatchError(ValueError):
    pass


@dataclass(frozen=True)
class BatteryParams:
    c_max: float = 10.0
    eta_c: float = 0.95
    eta_d: float = 0.95
    p_charge_max: float = 5.0
    p_discharge_max: float = 5.0
    x_min: float = -5.0
    x_max: float = 5.0
    s_init: Optional[float] = None  # default half capacity
    s_final: Optional[float] = None

    def __post_init__(self):
        if self.s_init is None:
            object.__setattr__(self, "s_init", 0.5 * self.c_max)
        if self.s_final is None:
            object.__setattr__(self, "s_final", 0.5 * self.c_max)
        if not self.c_max > 0:
            raise DispatchError("c_max must be positive")
        if not (0 < self.eta_c <= 1 and 0 < self.eta_d <= 1):
            raise DispatchError("efficiencies must lie in (0, 1]")
        if not (0 <= self.s_init <= self.c_max and 0 <= self.s_final <= self.c_max):
            raise DispatchError("s_init and s_final must lie in [0, c_max]")
        if self.x_min > self.x_max:
            raise DispatchError("x_min must not exceed x_max")
        if self.p_charge_max < 0 or self.p_discharge_max < 0:
            raise DispatchError("power limits must be nonnegative")


@dataclass(frozen=True)
class StrategyParams:
    lambda1: float = 0.5
    lambda2: float = 0.5
    lam: float = 0.5
    mu: float = 0.01
    gamma: float = 0.01

    def __post_init__(self):
        for k in ("lambda1", "lambda2", "lam", "mu", "gamma"):
            if getattr(self, k) < 0:
                raise DispatchError(f"{k} must be nonnegative")


@dataclass(frozen=True)
class RealInputs:
    """Realised quantities for one day; unused fields may stay None."""

    price: np.ndarray
    residual: Optional[np.ndarray] = None
    renewable: Optional[np.ndarray] = None
    demand: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Schedule:
    case: str
    status: str
    objective: float
    charge: np.ndarray
    discharge: np.ndarray
    soc: np.ndarray
    grid_buy: Optional[np.ndarray] = None
    batt_to_load: Optional[np.ndarray] = None
    grid_to_batt: Optional[np.ndarray] = None
    lp: Optional[LpSolution] = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def simultaneous(self) -> float:
        """Largest hourly overlap of charging and discharging (diagnostic)."""
        return float(np.minimum(self.charge, self.discharge).max())

    def check(self, bat: BatteryParams, demand=None, tol: float = 1e-7) -> float:
        """Largest violation of dynamics, bounds and (Case IV) load balance."""
        s = self.soc
        x_in = self.grid_to_batt if self.case == "IV" else self.charge
        x_out = self.batt_to_load if self.case == "IV" else self.discharge
        v = [np.abs(s[1:] - s[:-1] - bat.eta_c * x_in + x_out / bat.eta_d).max(),
             abs(s[0] - bat.s_init), max(bat.s_final - s[-1], 0.0),
             np.maximum(-s, 0).max(), np.maximum(s - bat.c_max, 0).max(),
             np.maximum(-x_in, 0).max(), np.maximum(x_in - bat.p_charge_max, 0).max(),
             np.maximum(-x_out, 0).max(), np.maximum(x_out - bat.p_discharge_max, 0).max()]
        if self.case == "IV":
            v.append(np.maximum(-self.grid_buy, 0).max())
            if demand is not None:
                v.append(np.abs(self.grid_buy + bat.eta_d * x_out - demand).max())
        else:
            net = self.discharge - self.charge
            v += [np.maximum(bat.x_min - net, 0).max(), np.maximum(net - bat.x_max, 0).max()]
        return float(max(v))


def _vec(a, T, name):
    a = np.asarray(a, dtype=float).ravel()
    if a.shape != (T,):
        raise DispatchError(f"{name} must have length {T}")
    if not np.isfinite(a).all():
        raise DispatchError(f"{name} must be finite")
    return a


def _soc_bounds(bat: BatteryParams, T: int):
    lb = np.zeros(T + 1)
    ub = np.full(T + 1, bat.c_max)
    lb[0] = ub[0] = bat.s_init
    lb[T] = max(lb[T], bat.s_final)
    return lb, ub


def _arbitrage_problem(gain_dis, cost_chg, bat: BatteryParams) -> LpProblem:
    """max sum(gain_dis * x-) - sum(cost_chg * x+) under the Case I constraints."""
    T = gain_dis.size
    n = 3 * T + 1
    c = np.concatenate([-cost_chg, gain_dis, np.zeros(T + 1)])
    A = np.zeros((2 * T, n))
    row_lb = np.zeros(2 * T)
    row_ub = np.zeros(2 * T)
    for t in range(T):
        # s_{t+1} - s_t - eta_c x+_t + x-_t / eta_d = 0
        A[t, 2 * T + t + 1] = 1.0
        A[t, 2 * T + t] = -1.0
        A[t, t] = -bat.eta_c
        A[t, T + t] = 1.0 / bat.eta_d
        # x_min <= x-_t - x+_t <= x_max
        A[T + t, T + t] = 1.0
        A[T + t, t] = -1.0
        row_lb[T + t] = bat.x_min
        row_ub[T + t] = bat.x_max
    slb, sub = _soc_bounds(bat, T)
    lb = np.concatenate([np.zeros(2 * T), slb])
    ub = np.concatenate([np.full(T, bat.p_charge_max), np.full(T, bat.p_discharge_max), sub])
    return LpProblem(c, A, row_lb, row_ub, lb, ub, sense="max")


def _arbitrage_schedule(case, prob, sol, T):
    if not sol.ok:
        nan = np.full(T, np.nan)
        return Schedule(case, sol.status, np.nan, nan, nan.copy(), np.full(T + 1, np.nan), lp=sol)
    x = sol.x
    return Schedule(case, sol.status, sol.objective, x[:T].copy(), x[T:2 * T].copy(),
                    x[2 * T:].copy(), lp=sol)


def plan_case1(p_hat, bat: BatteryParams = BatteryParams()) -> Schedule:
    p = np.asarray(p_hat, dtype=float).ravel()
    p = _vec(p, p.size, "p_hat")
    prob = _arbitrage_problem(p * bat.eta_d, p / bat.eta_c, bat)
    return _arbitrage_schedule("I", prob, solve_lp(prob), p.size)


def plan_case2(p_hat, sigma, lambda1: float, lambda2: float,
               bat: BatteryParams = BatteryParams()) -> Schedule:
    p = np.asarray(p_hat, dtype=float).ravel()
    T = p.size
    p, sigma = _vec(p, T, "p_hat"), _vec(sigma, T, "sigma")
    if (sigma < 0).any() or lambda1 < 0 or lambda2 < 0:
        raise DispatchError("sigma and risk weights must be nonnegative")
    prob = _arbitrage_problem(p * bat.eta_d - lambda1 * sigma,
                              p / bat.eta_c + lambda2 * sigma, bat)
    return _arbitrage_schedule("II", prob, solve_lp(prob), T)


def plan_case3(p_hat, sigma, r_hat, g_hat, lam: float, mu: float, gamma: float,
               bat: BatteryParams = BatteryParams()) -> Schedule:
    p = np.asarray(p_hat, dtype=float).ravel()
    T = p.size
    p, sigma = _vec(p, T, "p_hat"), _vec(sigma, T, "sigma")
    r, g = _vec(r_hat, T, "r_hat"), _vec(g_hat, T, "g_hat")
    if (sigma < 0).any() or min(lam, mu, gamma) < 0:
        raise DispatchError("sigma and weights must be nonnegative")
    prob = _arbitrage_problem(p * bat.eta_d - lam * sigma,
                              p / bat.eta_c + lam * sigma + mu * r - gamma * g, bat)
    return _arbitrage_schedule("III", prob, solve_lp(prob), T)


def _case4_problem(price_cost, bl_cost, demand, bat: BatteryParams) -> LpProblem:
    """min sum(price_cost * (gb + bg)) + sum(bl_cost * bl) with load balance."""
    T = demand.size
    n = 4 * T + 1
    gb, bl, bg, s0 = 0, T, 2 * T, 3 * T
    c = np.concatenate([price_cost[0], bl_cost, price_cost[1], np.zeros(T + 1)])
    A = np.zeros((2 * T, n))
    row_lb = np.zeros(2 * T)
    row_ub = np.zeros(2 * T)
    for t in range(T):
        A[t, s0 + t + 1] = 1.0
        A[t, s0 + t] = -1.0
        A[t, bg + t] = -bat.eta_c
        A[t, bl + t] = 1.0 / bat.eta_d
        A[T + t, gb + t] = 1.0
        A[T + t, bl + t] = bat.eta_d
        row_lb[T + t] = row_ub[T + t] = demand[t]
    slb, sub = _soc_bounds(bat, T)
    lb = np.concatenate([np.zeros(3 * T), slb])
    ub = np.concatenate([np.full(T, np.inf), np.full(T, bat.p_discharge_max),
                         np.full(T, bat.p_charge_max), sub])
    return LpProblem(c, A, row_lb, row_ub, lb, ub, sense="min")


def _case4_schedule(sol, T):
    if not sol.ok:
        nan = np.full(T, np.nan)
        return Schedule("IV", sol.status, np.nan, nan, nan.copy(), np.full(T + 1, np.nan),
                        nan.copy(), nan.copy(), nan.copy(), lp=sol)
    x = sol.x
    gb, bl, bg, s = x[:T], x[T:2 * T], x[2 * T:3 * T], x[3 * T:]
    return Schedule("IV", sol.status, sol.objective, bg.copy(), bl.copy(), s.copy(),
                    gb.copy(), bl.copy(), bg.copy(), lp=sol)


def plan_case4(p_hat, sigma, demand, lam: float, bat: BatteryParams = BatteryParams()) -> Schedule:
    p = np.asarray(p_hat, dtype=float).ravel()
    T = p.size
    p, sigma, L = _vec(p, T, "p_hat"), _vec(sigma, T, "sigma"), _vec(demand, T, "demand")
    if (sigma < 0).any() or lam < 0:
        raise DispatchError("sigma and lambda must be nonnegative")
    if (L < 0).any():
        raise DispatchError("demand must be nonnegative")
    pen = lam * sigma
    prob = _case4_problem((p + pen, p + pen), pen, L, bat)
    return _case4_schedule(solve_lp(prob), T)


def perfect_foresight(case: str, real: RealInputs, bat: BatteryParams = BatteryParams(),
                      strategy: StrategyParams = StrategyParams()) -> Schedule:
    p = np.asarray(real.price, dtype=float)
    T = p.size
    zero = np.zeros(T)
    if case in ("I", "II"):
        s = plan_case1(p, bat)
        return Schedule(case, s.status, s.objective, s.charge, s.discharge, s.soc, lp=s.lp)
    if case == "III":
        if real.residual is None or real.renewable is None:
            raise DispatchError("Case III needs realised residual load and renewables")
        return plan_case3(p, zero, real.residual, real.renewable, 0.0, strategy.mu,
                          strategy.gamma, bat)
    if case == "IV":
        if real.demand is None:
            raise DispatchError("Case IV needs the realised demand")
        return plan_case4(p, zero, real.demand, 0.0, bat)
    raise DispatchError(f"unknown case {case!r}")


def realized_value(case: str, schedule: Schedule, real: RealInputs,
                   bat: BatteryParams = BatteryParams(),
                   strategy: StrategyParams = StrategyParams()) -> float:
    """Perfect-foresight objective of ``case`` evaluated at the schedule's decisions."""
    if case not in CASES:
        raise DispatchError(f"unknown case {case!r}")
    if schedule.case != case:
        raise DispatchError(f"schedule was planned for Case {schedule.case}, not Case {case}")
    p = np.asarray(real.price, dtype=float)
    if case == "IV":
        return float(p @ schedule.grid_buy + p @ schedule.grid_to_batt)
    value = float(p @ (schedule.discharge * bat.eta_d) - p @ (schedule.charge / bat.eta_c))
    if case == "III":
        value += float(-strategy.mu * (np.asarray(real.residual) @ schedule.charge)
                       + strategy.gamma * (np.asarray(real.renewable) @ schedule.charge))
    return value


def plan(case: str, p_hat, sigma=None, bat: BatteryParams = BatteryParams(),
         strategy: StrategyParams = StrategyParams(), r_hat=None, g_hat=None,
         demand=None) -> Schedule:
    """Dispatch by case name with the configured strategy weights."""
    p = np.asarray(p_hat, dtype=float)
    sigma = np.zeros_like(p) if sigma is None else sigma
    if case == "I":
        return plan_case1(p, bat)
    if case == "II":
        return plan_case2(p, sigma, strategy.lambda1, strategy.lambda2, bat)
    if case == "III":
        return plan_case3(p, sigma, r_hat, g_hat, strategy.lam, strategy.mu, strategy.gamma, bat)
    if case == "IV":
        return plan_case4(p, sigma, demand, strategy.lam, bat)
    raise DispatchError(f"unknown case {case!r}")
