"""Exhaustive ground truth for small instances.

Worst cases are found by solving the recourse MILP at every scenario vertex;
co-planning enumerates every feasible first stage. Recourse values depend on
the first stage only through rental and pre-allocation, so they are cached
per (chi, g0, scenario) and shared across hardening patterns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from coplan.ddu import EnumerationCapError, enumerate_scenario_vertices
from coplan.decisions import FirstStageDecision, Scenario
from coplan.formulation import recourse_fixings, recourse_model
from coplan.instance import NetworkInstance
from coplan.solver import OPTIMAL, SolveParams, SolverError, solve_milp

TOL = 1e-6


class OracleCache:
    """Recourse values keyed by (chi, g0, scenario)."""

    def __init__(self, inst: NetworkInstance, params: SolveParams | None = None, backend: str = "highs"):
        self.inst = inst
        self.params = params or SolveParams()
        self.backend = backend
        self.values: dict[tuple, float] = {}
        self.solves = 0

    def value(self, z: FirstStageDecision, s: Scenario) -> float:
        key = (z.chi, z.g0, s.key())
        v = self.values.get(key)
        if v is None:
            cm = recourse_model(self.inst).with_bounds(recourse_fixings(self.inst, z, s))
            sol = solve_milp(cm, self.params, self.backend)
            if sol.status != OPTIMAL:
                raise SolverError(f"recourse MILP not solved: {sol.status}", sol.status)
            v = float(sol.objective)
            self.values[key] = v
            self.solves += 1
        return v


def brute_force_worst_case(inst: NetworkInstance, x: tuple[int, ...], z: FirstStageDecision,
                           cache: OracleCache | None = None, cap: int = 20) -> tuple[float, Scenario]:
    """Minimum recourse value over all scenario vertices; first minimizer in enumeration order."""
    cache = cache or OracleCache(inst)
    best, arg = math.inf, None
    for s in enumerate_scenario_vertices(inst, x, z, cap):
        v = cache.value(z, s)
        if v < best:
            best, arg = v, s
    return best, arg


def first_stage_candidates(inst: NetworkInstance, cap: int = 4096) -> list[FirstStageDecision]:
    """Every budget- and parking-feasible (x, chi, g0), cheapest first."""
    nv, M, E = len(inst.vulnerable), inst.n_mhers, len(inst.eh_nodes)
    placements: list[tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]] = []
    for choice in itertools.product(range(-1, E), repeat=M):
        chi = tuple(int(c >= 0) for c in choice)
        g0 = tuple(tuple(int(c == e) for e in range(E)) for c in choice)
        placements.append((chi, g0))
    out = []
    for x in itertools.product((0, 1), repeat=nv):
        for chi, g0 in placements:
            z = FirstStageDecision(x, chi, g0)
            if z.feasible(inst):
                out.append(z)
                if len(out) > cap:
                    raise EnumerationCapError("feasible first stages", len(out), cap)
    out.sort(key=lambda z: z.exact_cost(inst))
    return out


@dataclass
class TableRow:
    decision: FirstStageDecision
    cost: Fraction
    worst: float
    scenario: Scenario


def worst_case_table(inst: NetworkInstance, cache: OracleCache | None = None,
                     cap: int = 4096) -> list[TableRow]:
    """Worst-case ratio of every feasible first stage, cheapest first."""
    cache = cache or OracleCache(inst)
    rows = []
    for z in first_stage_candidates(inst, cap):
        v, s = brute_force_worst_case(inst, z.x, z, cache)
        rows.append(TableRow(z, z.exact_cost(inst), v, s))
    return rows


@dataclass
class OracleSolution:
    status: str
    decision: FirstStageDecision | None
    src: Fraction | None
    certified_ratio: float
    optima: list[FirstStageDecision]


def brute_force_coplan(inst: NetworkInstance, table: list[TableRow] | None = None,
                       cap: int = 4096, max_optima: int = 10) -> OracleSolution:
    """Cheapest first stage whose worst case meets the target; all optima up to a count cap."""
    table = table if table is not None else worst_case_table(inst, cap=cap)
    ok = [r for r in table if r.worst >= inst.resilience_target - TOL]
    if not ok:
        return OracleSolution("infeasible", None, None, math.nan, [])
    best = min(r.cost for r in ok)
    optima = [r for r in ok if r.cost == best][:max_optima]
    return OracleSolution("optimal", optima[0].decision, best, optima[0].worst, [r.decision for r in optima])
