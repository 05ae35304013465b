from .cases import (
    CASES,
    BatteryParams,
    DispatchError,
    RealInputs,
    Schedule,
    StrategyParams,
    perfect_foresight,
    plan,
    plan_case1,
    plan_case2,
    plan_case3,
    plan_case4,
    realized_value,
)
from .lp import LpProblem, LpSolution, kkt_residual, solve_lp
from .vertex import vertex_optimum
