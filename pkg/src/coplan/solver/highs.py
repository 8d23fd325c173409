"""HiGHS backend through highspy."""

from __future__ import annotations

import math
import time

import highspy
import numpy as np

from coplan.model import CompiledModel
from coplan.solver.base import (ERROR, FEASIBLE_LIMIT, INFEASIBLE, OPTIMAL, UNBOUNDED, Backend,
                                MilpSolution, SolveParams)

_MS = highspy.HighsModelStatus


class HighsBackend(Backend):
    name = "highs"

    def _configure(self, h: highspy.Highs, params: SolveParams, mip: bool, want_duals: bool) -> None:
        h.setOptionValue("output_flag", bool(params.verbose))
        h.setOptionValue("threads", int(params.threads))
        h.setOptionValue("random_seed", int(params.seed))
        h.setOptionValue("primal_feasibility_tolerance", params.feas_tol)
        h.setOptionValue("dual_feasibility_tolerance", params.feas_tol)
        if math.isfinite(params.time_limit):
            h.setOptionValue("time_limit", float(params.time_limit))
        if mip:
            h.setOptionValue("mip_rel_gap", params.gap)
            h.setOptionValue("mip_abs_gap", params.abs_gap)
            h.setOptionValue("mip_feasibility_tolerance", params.feas_tol)
        if want_duals:
            # simplex yields a vertex, so the duals are basic
            h.setOptionValue("solver", "simplex")

    def _build(self, cm: CompiledModel) -> highspy.HighsLp:
        lp = highspy.HighsLp()
        lp.num_col_ = cm.n_cols
        lp.num_row_ = cm.n_rows
        lp.col_cost_ = cm.c if cm.sense == "min" else -cm.c
        lp.col_lower_ = cm.lb
        lp.col_upper_ = cm.ub
        lp.row_lower_ = cm.row_lo
        lp.row_upper_ = cm.row_hi
        A = cm.A.tocsc()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        if cm.has_integers:
            lp.integrality_ = [highspy.HighsVarType.kInteger if i else highspy.HighsVarType.kContinuous
                               for i in cm.integer]
        return lp

    def _run(self, cm: CompiledModel, params: SolveParams, want_duals: bool, presolve: bool):
        h = highspy.Highs()
        self._configure(h, params, cm.has_integers, want_duals)
        if not presolve:
            h.setOptionValue("presolve", "off")
        h.passModel(self._build(cm))
        h.run()
        return h, h.getModelStatus()

    def solve(self, cm: CompiledModel, params: SolveParams, want_duals: bool = False) -> MilpSolution:
        t0 = time.perf_counter()
        h, st = self._run(cm, params, want_duals, presolve=True)
        if st == _MS.kUnboundedOrInfeasible:
            h, st = self._run(cm, params, want_duals, presolve=False)
        sign = 1.0 if cm.sense == "min" else -1.0
        wall = time.perf_counter() - t0
        if st == _MS.kInfeasible:
            return MilpSolution(INFEASIBLE, wall=wall)
        if st in (_MS.kUnbounded, _MS.kUnboundedOrInfeasible):
            return MilpSolution(UNBOUNDED, wall=wall, message=h.modelStatusToString(st))
        sol = h.getSolution()
        info = h.getInfo()
        has_x = bool(sol.value_valid)
        if st == _MS.kOptimal:
            status = OPTIMAL
        elif has_x and st in (_MS.kTimeLimit, _MS.kIterationLimit, _MS.kSolutionLimit, _MS.kInterrupt):
            status = FEASIBLE_LIMIT
        else:
            return MilpSolution(ERROR, wall=wall, message=h.modelStatusToString(st))
        x = np.array(sol.col_value, dtype=float)
        obj = cm.objective_value(x)
        if cm.has_integers:
            bound = sign * info.mip_dual_bound + cm.constant if math.isfinite(info.mip_dual_bound) else obj
        else:
            bound = obj
        out = MilpSolution(status, obj, x, bound, wall)
        if want_duals:
            if not sol.dual_valid:
                return MilpSolution(ERROR, wall=wall, message="no dual values")
            # HiGHS minimizes: c_min = A^T y_h + ...; for max we passed -c, so mu = -y_h
            out.row_duals = sign * np.array(sol.row_dual, dtype=float)
        return out
