"""LP-relaxation branch-and-bound MILP engine with incumbent callbacks."""

from .bnb import (
    CONTINUE,
    STOP,
    CallbackAction,
    Incumbent,
    SolveOutcome,
    SolveStats,
    SolverConfig,
    SolverError,
    branch_and_bound,
    rounding_heuristic,
)
from .simplex import FEAS_TOL, OPT_TOL, LpResult, PreparedLp, solve_lp

__all__ = [
    "CONTINUE",
    "STOP",
    "CallbackAction",
    "FEAS_TOL",
    "Incumbent",
    "LpResult",
    "OPT_TOL",
    "PreparedLp",
    "SolveOutcome",
    "SolveStats",
    "SolverConfig",
    "SolverError",
    "branch_and_bound",
    "rounding_heuristic",
    "solve_lp",
]
