"""Pure-numpy reference backend: dense two-phase simplex plus branch and bound.

Meant for micro-instances and for cross-checking the production backend.
Degenerate stalls fall back to Bland's rule, which keeps the simplex finite.
"""

from __future__ import annotations

import math
import time

import numpy as np

from coplan.model import CompiledModel
from coplan.solver.base import (ERROR, INFEASIBLE, OPTIMAL, UNBOUNDED, Backend, MilpSolution,
                                SolveParams)

TOL = 1e-9
PIVOT_TOL = 1e-7
BLAND_AFTER = 50  # consecutive degenerate pivots before switching rules
REINVERT = 50  # pivots between tableau rebuilds


class _StdForm:
    """min c^T z, S z = b, z >= 0, with a map back to the original columns."""

    def __init__(self, cm: CompiledModel, lb: np.ndarray, ub: np.ndarray):
        n = cm.n_cols
        A = cm.A.toarray()
        cols: list[np.ndarray] = []  # columns of the row block
        cost: list[float] = []
        self.back: list[tuple[int, float]] = []  # (orig col, sign) per std column
        shift = np.zeros(n)
        bound_rows: list[tuple[int, float]] = []  # (std col, width)
        for j in range(n):
            lo, hi = lb[j], ub[j]
            cj = cm.c[j] if cm.sense == "min" else -cm.c[j]
            if math.isfinite(lo):
                shift[j] = lo
                self.back.append((j, 1.0))
                cols.append(A[:, j])
                cost.append(cj)
                if math.isfinite(hi):
                    bound_rows.append((len(cols) - 1, hi - lo))
            elif math.isfinite(hi):
                shift[j] = hi
                self.back.append((j, -1.0))
                cols.append(-A[:, j])
                cost.append(-cj)
            else:
                self.back.append((j, 1.0))
                cols.append(A[:, j])
                cost.append(cj)
                self.back.append((j, -1.0))
                cols.append(-A[:, j])
                cost.append(-cj)
        self.shift = shift
        self.n_struct = len(cols)
        m = cm.n_rows
        base = A @ shift
        rows: list[np.ndarray] = []
        rhs: list[float] = []
        self.row_of: list[list[tuple[int, float]]] = [[] for _ in range(m)]
        struct = np.array(cols).T if cols else np.zeros((m, 0))
        slack_cols: list[tuple[int, float]] = []  # (std row, coefficient)
        for r in range(m):
            lo, hi = cm.row_lo[r], cm.row_hi[r]
            if lo == hi:
                self.row_of[r].append((len(rows), 1.0))
                rows.append(struct[r])
                rhs.append(lo - base[r])
                continue
            if math.isfinite(lo):
                self.row_of[r].append((len(rows), 1.0))
                slack_cols.append((len(rows), -1.0))
                rows.append(struct[r])
                rhs.append(lo - base[r])
            if math.isfinite(hi):
                self.row_of[r].append((len(rows), 1.0))
                slack_cols.append((len(rows), 1.0))
                rows.append(struct[r])
                rhs.append(hi - base[r])
        self.n_model_rows = len(rows)
        for sc, width in bound_rows:
            e = np.zeros(self.n_struct)
            e[sc] = 1.0
            slack_cols.append((len(rows), 1.0))
            rows.append(e)
            rhs.append(width)
        S = np.array(rows, dtype=float).reshape(len(rows), self.n_struct)
        extra = np.zeros((len(rows), len(slack_cols)))
        for k, (r, v) in enumerate(slack_cols):
            extra[r, k] = v
        self.S = np.hstack([S, extra])
        self.b = np.array(rhs, dtype=float)
        self.cost = np.concatenate([np.array(cost, dtype=float), np.zeros(len(slack_cols))])
        self.n_orig = n

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = self.shift.copy()
        for k, (j, s) in enumerate(self.back):
            x[j] += s * z[k]
        return x


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _tableau(A: np.ndarray, b: np.ndarray, c: np.ndarray, basis: list[int]) -> np.ndarray:
    """Fresh tableau B^-1 [A | b] with reduced costs in the last row (last entry = -objective)."""
    X = np.linalg.solve(A[:, basis], np.column_stack([A, b]))
    cost = np.append(c, 0.0)
    return np.vstack([X, cost - c[basis] @ X])


def _run(A: np.ndarray, b: np.ndarray, c: np.ndarray, basis: list[int], allowed: int,
         max_iter: int) -> tuple[str, np.ndarray]:
    """Primal simplex from a feasible basis; columns >= ``allowed`` never enter.

    Dantzig pricing; after a run of degenerate pivots it switches to Bland's
    rule, which cannot cycle, until the objective moves again. The tableau is
    rebuilt from the original data every few pivots to stop error build-up.
    """
    m = A.shape[0]
    T = _tableau(A, b, c, basis)
    stall = since = 0
    for _ in range(max_iter):
        red = T[-1, :allowed]
        if stall < BLAND_AFTER:
            enter = int(np.argmin(red))
            done = red[enter] >= -TOL
        else:
            cand = np.flatnonzero(red < -TOL)
            done = not len(cand)
            enter = int(cand[0]) if not done else -1
        if done:
            if since == 0:
                return "optimal", T
            T, since = _tableau(A, b, c, basis), 0
            continue
        colv = T[:m, enter]
        pos = np.flatnonzero(colv > PIVOT_TOL)
        if not len(pos):
            return "unbounded", T
        ratios = np.maximum(T[pos, -1], 0.0) / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + TOL]
        if stall < BLAND_AFTER:
            leave = int(ties[np.argmax(colv[ties])])
        else:
            leave = int(ties[np.argmin(np.asarray(basis)[ties])])
        stall = stall + 1 if best <= TOL else 0
        _pivot(T, leave, enter)
        basis[leave] = enter
        since += 1
        if since >= REINVERT:
            T, since = _tableau(A, b, c, basis), 0
    return "limit", T


def simplex(S: np.ndarray, b: np.ndarray, c: np.ndarray, max_iter: int = 50000):
    """Solve min c^T z, S z = b, z >= 0. Returns (status, z, y, basis)."""
    m, n = S.shape
    sign = np.where(b < 0, -1.0, 1.0)
    S = S * sign[:, None]
    b = b * sign
    # phase 1 on artificials
    A1 = np.hstack([S, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    st, T = _run(A1, b, c1, basis, n + m, max_iter)
    if st == "limit":
        return "limit", None, None, None
    if -T[-1, -1] > 1e-7 * max(1.0, float(np.abs(b).max(initial=0.0))):
        return "infeasible", None, None, None
    # drive artificials out; drop redundant rows
    keep = list(range(m))
    for i in range(m):
        if basis[i] >= n:
            row = np.abs(T[i, :n])
            j = int(np.argmax(row)) if n else -1
            if n and row[j] > 1e-7:
                _pivot(T, i, j)
                basis[i] = j
            else:
                keep.remove(i)
    basis = [basis[i] for i in keep]
    A2, b2 = S[keep], b[keep]
    st, T = _run(A2, b2, c, basis, n, max_iter)
    if st != "optimal":
        return st, None, None, None
    z = np.zeros(n)
    z[basis] = T[:-1, -1]
    y = np.zeros(m)
    if keep:
        y[keep] = np.linalg.solve(A2[:, basis].T, c[basis])
    return "optimal", z, y * sign, basis


class ReferenceBackend(Backend):
    name = "reference"

    def __init__(self, node_limit: int = 20000):
        self.node_limit = node_limit

    def _lp(self, cm: CompiledModel, lb: np.ndarray, ub: np.ndarray, want_duals: bool):
        if np.any(lb > ub + TOL):
            return INFEASIBLE, None, None
        sf = _StdForm(cm, lb, ub)
        try:
            st, z, y, _ = simplex(sf.S, sf.b, sf.cost)
        except np.linalg.LinAlgError:
            return ERROR, None, None
        if st == "infeasible":
            return INFEASIBLE, None, None
        if st == "unbounded":
            return UNBOUNDED, None, None
        if st != "optimal":
            return ERROR, None, None
        x = sf.recover(z)
        duals = None
        if want_duals:
            duals = np.zeros(cm.n_rows)
            for r, parts in enumerate(sf.row_of):
                duals[r] = sum(y[k] * s for k, s in parts)
            if cm.sense == "max":
                duals = -duals
        return OPTIMAL, x, duals

    def solve(self, cm: CompiledModel, params: SolveParams, want_duals: bool = False) -> MilpSolution:
        t0 = time.perf_counter()
        if not cm.has_integers:
            st, x, duals = self._lp(cm, cm.lb, cm.ub, want_duals)
            wall = time.perf_counter() - t0
            if st != OPTIMAL:
                return MilpSolution(st, wall=wall)
            obj = cm.objective_value(x)
            return MilpSolution(OPTIMAL, obj, x, obj, wall, duals)
        sense = 1.0 if cm.sense == "min" else -1.0
        ints = np.flatnonzero(cm.integer)
        best_x, best = None, math.inf
        stack = [(np.where(cm.integer, np.ceil(cm.lb - TOL), cm.lb),
                  np.where(cm.integer, np.floor(cm.ub + TOL), cm.ub))]
        nodes = 0
        while stack:
            nodes += 1
            if nodes > self.node_limit or time.perf_counter() - t0 > params.time_limit:
                return MilpSolution(ERROR, wall=time.perf_counter() - t0, message="node limit")
            lb, ub = stack.pop()
            st, x, _ = self._lp(cm, lb, ub, False)
            if st in (UNBOUNDED, ERROR):
                return MilpSolution(st, wall=time.perf_counter() - t0, message="node LP failed")
            if st != OPTIMAL:
                continue
            val = sense * cm.objective_value(x)
            if val >= best - params.abs_gap - params.gap * abs(best if math.isfinite(best) else 0):
                continue
            frac = np.abs(x[ints] - np.round(x[ints]))
            if frac.max(initial=0.0) <= 1e-7:
                x = x.copy()
                x[ints] = np.round(x[ints])
                best_x, best = x, val
                continue
            j = ints[int(np.argmax(frac))]
            lo_ub, hi_lb = ub.copy(), lb.copy()
            lo_ub[j] = math.floor(x[j])
            hi_lb[j] = math.floor(x[j]) + 1
            stack.append((lb, lo_ub))
            stack.append((hi_lb, ub))
        wall = time.perf_counter() - t0
        if best_x is None:
            return MilpSolution(INFEASIBLE, wall=wall)
        obj = cm.objective_value(best_x)
        return MilpSolution(OPTIMAL, obj, best_x, obj, wall)
