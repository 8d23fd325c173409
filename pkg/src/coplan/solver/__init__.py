"""Solver interface: the only place that knows an external MILP engine exists."""

from coplan.solver.base import (ERROR, FEAS_TOL, FEASIBLE_LIMIT, INFEASIBLE, OPTIMAL, UNBOUNDED,
                                Backend, MilpSolution, SolveParams, SolverError, get_backend,
                                solve_lp_with_duals, solve_milp)

__all__ = [
    "ERROR", "FEAS_TOL", "FEASIBLE_LIMIT", "INFEASIBLE", "OPTIMAL", "UNBOUNDED", "Backend",
    "MilpSolution", "SolveParams", "SolverError", "get_backend", "solve_lp_with_duals", "solve_milp",
]
