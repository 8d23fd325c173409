"""Nested parametric column-and-constraint generation.

Outer loop: a master over first-stage decisions accumulates, per iteration,
a fresh recourse copy whose scenario is pinned by an OU block (worst-case
optimality through KKT) and a row forcing the copy to meet the resilience
target. Inner loop: classic C&CG on the min-max recourse problem at a fixed
first stage, followed by a correction loop that removes optimistic
scenarios from the OU set.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from coplan.ddu import build_ou_block, build_ou_prime_block, h0_vertices
from coplan.decisions import (DualPoint, FirstStageDecision, RecoursePlan, Scenario, Upsilon,
                              VUPairSet)
from coplan.formulation import (THETA, RecourseTemplate, build_first_stage, chi_name,
                                first_stage_values, g0_name, h0_name, nm, plan_from,
                                recourse_block, recourse_fixings, recourse_model,
                                recourse_objective, u_name, upsilon_from, x_name)
from coplan.instance import NetworkInstance
from coplan.model import BINARY, CONTINUOUS, EQ, GE, INF, CompiledModel, ConstraintBlock
from coplan.solver import (INFEASIBLE, OPTIMAL, SolveParams, SolverError, solve_lp_with_duals,
                           solve_milp)

log = logging.getLogger(__name__)

OPTIMAL_STATUS = "optimal"
INFEASIBLE_STATUS = "infeasible"

PHASES = ("mp1", "mp2", "sp2", "cp")


class AlgorithmError(RuntimeError):
    """Iteration cap reached; carries the best incumbent and the traces."""

    def __init__(self, message: str, incumbent: FirstStageDecision | None = None,
                 iterations: list | None = None):
        self.incumbent = incumbent
        self.iterations = iterations or []
        super().__init__(message)


@dataclass(frozen=True)
class AlgorithmConfig:
    eps: float = 1e-6  # inner relative gap
    eps0: float = 1e-9  # guard on |LB| in the gap test
    tol: float = 1e-6  # feasibility / comparison tolerance
    dual_cap: float = 1e4
    max_outer: int = 100
    max_inner: int = 200
    max_correction: int = 20
    ou_prime: bool = True
    warm_start: bool = True
    backend: str = "highs"
    time_limit: float = math.inf  # wall seconds for a whole solve_coplan call
    params: SolveParams = field(default_factory=SolveParams)

    @classmethod
    def with_enhancements(cls, which: str, **kw) -> "AlgorithmConfig":
        table = {"none": (False, False), "ou-prime": (True, False), "warm-start": (False, True),
                 "all": (True, True)}
        if which not in table:
            raise ValueError(f"unknown enhancement set {which!r}")
        op, ws = table[which]
        return cls(ou_prime=op, warm_start=ws, **kw)


@dataclass
class IterationRecord:
    outer_n: int
    inner_j: int
    phase: str
    lb: float
    ub: float
    wall_ms: float
    cuts_total: int


@dataclass
class WorstCaseResult:
    value: float
    scenario: Scenario
    plan: RecoursePlan
    pairs: VUPairSet
    history: list[tuple[int, ...]]
    inner_iterations: int
    corrections: int
    lb_trace: list[float]
    ub_trace: list[float]
    records: list[IterationRecord] = field(default_factory=list)


@dataclass
class CoPlanSolution:
    status: str
    decision: FirstStageDecision | None
    src: Fraction | None
    certified_ratio: float
    worst: WorstCaseResult | None
    outer_iterations: int
    inner_iterations_total: int
    mp1_trace: list[float]
    iterations: list[IterationRecord]
    wall: float
    config: AlgorithmConfig

    @property
    def src_dollars(self) -> float | None:
        return None if self.src is None else float(self.src)


class _Clock:
    def __init__(self):
        self.t0 = time.perf_counter()

    def ms(self) -> float:
        return (time.perf_counter() - self.t0) * 1e3


# -- subproblem and dual extraction ----------------------------------------------


def inner_subproblem(inst: NetworkInstance, z: FirstStageDecision, scenario: Scenario,
                     cfg: AlgorithmConfig | None = None) -> tuple[Upsilon, RecoursePlan, float]:
    """Recourse MILP at a fixed scenario; returns the routing/switching, the plan and its value."""
    cfg = cfg or AlgorithmConfig()
    cm = recourse_model(inst).with_bounds(recourse_fixings(inst, z, scenario))
    sol = solve_milp(cm, cfg.params, cfg.backend)
    if sol.status != OPTIMAL:
        raise SolverError(f"recourse MILP not solved: {sol.status} {sol.message}", sol.status)
    plan = plan_from(inst, sol.get, z, scenario)
    return plan.upsilon, plan, float(sol.objective)


def theta_feasible(inst: NetworkInstance, z: FirstStageDecision, ups: Upsilon) -> bool:
    """Whether (gamma, omega) satisfies the routing/radiality rows under z."""
    vals = {k: v for k, v in first_stage_values(inst, z).items()}
    gam = ups.gamma_array(inst)
    for m in range(inst.n_mhers):
        for e in range(len(inst.eh_nodes)):
            for t in range(1, inst.periods + 1):
                vals[nm("gam", m, e, t)] = gam[m, e, t - 1]
    om = ups.omega_array(inst)
    for a, l in enumerate(inst.switchable):
        for t in range(1, inst.periods + 1):
            vals[nm("om", l, t)] = om[a, t - 1]
    rows = inst.cache.get("theta_rows")
    if rows is None:
        rows = [r for r in recourse_block(inst).rows if r.group == THETA]
        inst.cache["theta_rows"] = rows
    for r in rows:
        lhs = sum(c * vals[k] for k, c in r.coeffs.items())
        if r.sense == GE and lhs < r.rhs - 1e-9:
            return False
        if r.sense == EQ and abs(lhs - r.rhs) > 1e-9:
            return False
        if r.sense not in (GE, EQ) and lhs > r.rhs + 1e-9:
            return False
    return True


def extract_extreme_point(inst: NetworkInstance, z: FirstStageDecision, scenario: Scenario, ups: Upsilon,
                          cfg: AlgorithmConfig | None = None) -> tuple[DualPoint, float]:
    """Basic optimal dual of the recourse LP at fixed (upsilon, scenario); returns (mu, value)."""
    cfg = cfg or AlgorithmConfig()
    tpl = RecourseTemplate.build(inst)
    sol = solve_lp_with_duals(tpl.lp_model(ups, scenario, z.chi), cfg.params, cfg.backend)
    mu = np.array(sol.row_duals, dtype=float)
    mu = np.where(tpl.is_eq, mu, np.minimum(mu, 0.0))
    res = float(np.abs(tpl.A.T @ mu - tpl.q).max(initial=0.0))
    if res > 1e-8:
        raise SolverError(f"extracted dual violates A^T mu = q by {res:.2e}")
    if np.abs(mu).max(initial=0.0) > cfg.dual_cap:
        raise SolverError("extracted dual exceeds the configured dual cap")
    return DualPoint(mu, tpl.is_lambda.copy()), float(sol.objective)


# -- inner master ----------------------------------------------------------------


class _Cols:
    """Column registry for matrix-form models."""

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []

    def add(self, name: str, lb: float, ub: float, integer: bool = False) -> int:
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(integer)
        return len(self.names) - 1


class _Rows:
    def __init__(self):
        self.i: list[int] = []
        self.j: list[int] = []
        self.v: list[float] = []
        self.lo: list[float] = []
        self.hi: list[float] = []

    def add(self, cols, vals, lo: float, hi: float) -> None:
        r = len(self.lo)
        for c, v in zip(cols, vals):
            if v:
                self.i.append(r)
                self.j.append(c)
                self.v.append(float(v))
        self.lo.append(lo)
        self.hi.append(hi)

    def add_block(self, M: sp.spmatrix, col_offset: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> None:
        M = sp.coo_matrix(M)
        r0 = len(self.lo)
        self.i.extend((M.row + r0).tolist())
        self.j.extend(col_offset[M.col].tolist())
        self.v.extend(M.data.tolist())
        self.lo.extend(lo.tolist())
        self.hi.extend(hi.tolist())


def _mccormick(rows: _Rows, w: int, mu: int, b: int, lo: float, hi: float) -> None:
    """w = mu * b with b binary and mu in [lo, hi]."""
    rows.add((w, b), (1.0, -lo), 0.0, INF)  # w >= lo b
    rows.add((w, b), (1.0, -hi), -INF, 0.0)  # w <= hi b
    rows.add((w, mu, b), (1.0, -1.0, -hi), -hi, INF)  # w >= mu - hi (1 - b)
    rows.add((w, mu, b), (1.0, -1.0, -lo), -INF, -lo)  # w <= mu - lo (1 - b)


def inner_master(inst: NetworkInstance, x: tuple[int, ...], z: FirstStageDecision, upsilons: list[Upsilon],
                 cfg: AlgorithmConfig | None = None) -> tuple[Scenario, float, list[DualPoint]]:
    """min eta over (u, H0) in U(x, z) and one dual block per recorded upsilon.

    H0 is restricted to the vertices of its polytope via selection binaries,
    so every bilinear term is a binary times a linear form in mu. Each form
    gets its own column with interval bounds taken from the dual cap, and the
    product with its binary is linearized exactly.
    """
    cfg = cfg or AlgorithmConfig()
    if not upsilons:
        raise ValueError("inner master needs at least one dual block")
    tpl = RecourseTemplate.build(inst)
    R, ny = tpl.n_rows, len(tpl.y_names)
    nv = len(inst.vulnerable)
    cap = cfg.dual_cap
    verts = h0_vertices(inst, z.chi)
    cols, rows = _Cols(), _Rows()
    eta = cols.add("eta", -INF, INF)
    ucol = [cols.add(u_name(l), float(x[a]), 1.0, True) for a, l in enumerate(inst.vulnerable)]
    scol = [cols.add(f"sel[{v}]", 0.0, 1.0, True) for v in range(len(verts))]
    rows.add(ucol, [1.0] * nv, float(nv - inst.k), INF)
    rows.add(scol, [1.0] * len(scol), 1.0, 1.0)
    mu_lo = np.full(R, -cap)
    mu_hi = np.where(tpl.is_eq, cap, 0.0)
    AT = tpl.A.T.tocsr()
    Vm = np.array(verts, dtype=float).reshape(len(verts), inst.n_mhers)
    mu_cols = []
    for i, ups in enumerate(upsilons):
        b0, B, C, _ = tpl.affine_parts(ups, z.chi)
        mc = np.array([cols.add(f"mu{i}[{r}]", mu_lo[r], mu_hi[r]) for r in range(R)])
        mu_cols.append(mc)
        rows.add_block(AT, mc, tpl.q, tpl.q)
        # eta - mu^T b0 - sum_l u_l (B_l^T mu) - sum_v sel_v (C h_v)^T mu >= 0; each product
        # of a binary with a linear form in mu is linearized with interval bounds of that form
        ecol, evals = [eta], [1.0]
        ecol.extend(mc.tolist())
        evals.extend((-b0).tolist())
        forms = [(ucol[a], B[:, a]) for a in range(nv)]
        CH = C @ Vm.T
        forms += [(scol[v], CH[:, v]) for v in range(len(verts))]
        for k, (bin_col, coef) in enumerate(forms):
            nz = np.flatnonzero(coef)
            if not len(nz):
                continue
            a = coef[nz]
            lo = float(np.sum(np.minimum(a * mu_lo[nz], a * mu_hi[nz])))
            hi = float(np.sum(np.maximum(a * mu_lo[nz], a * mu_hi[nz])))
            s_col = cols.add(f"form{i}[{k}]", lo, hi)
            rows.add([s_col] + mc[nz].tolist(), [1.0] + (-a).tolist(), 0.0, 0.0)
            w = cols.add(f"prod{i}[{k}]", min(lo, 0.0), max(hi, 0.0))
            _mccormick(rows, w, s_col, bin_col, lo, hi)
            ecol.append(w)
            evals.append(-1.0)
        rows.add(ecol, evals, 0.0, INF)
    n = len(cols.names)
    A = sp.csr_matrix((rows.v, (rows.i, rows.j)), shape=(len(rows.lo), n))
    A.sum_duplicates()
    c = np.zeros(n)
    c[eta] = 1.0
    cm = CompiledModel(cols.names, c, np.array(cols.lb), np.array(cols.ub), np.array(cols.integer),
                       A, np.array(rows.lo), np.array(rows.hi), "min")
    sol = solve_milp(cm, cfg.params, cfg.backend)
    if sol.status != OPTIMAL:
        raise SolverError(f"inner master not solved: {sol.status} {sol.message}", sol.status)
    u = tuple(int(round(sol.x[j])) for j in ucol)
    v = int(np.argmax([sol.x[j] for j in scol]))
    scen = Scenario(u, tuple(float(h) for h in verts[v]))
    mus = [DualPoint(sol.x[mc], tpl.is_lambda.copy()) for mc in mu_cols]
    return scen, float(sol.objective), mus


def initial_scenario(inst: NetworkInstance, x: tuple[int, ...], z: FirstStageDecision) -> Scenario:
    """Scenario used before any dual block exists: first k unhardened lines down, lowest H0 vertex."""
    u = [1] * len(inst.vulnerable)
    left = inst.k
    for a, xi in enumerate(x):
        if left and not xi:
            u[a] = 0
            left -= 1
    return Scenario(tuple(u), h0_vertices(inst, z.chi)[0])


# -- correction ------------------------------------------------------------------


def _fixed_first_stage(blk: ConstraintBlock, inst: NetworkInstance, x: tuple[int, ...],
                       z: FirstStageDecision) -> None:
    for l, xv in zip(inst.vulnerable, x):
        blk.add_var(x_name(l), CONTINUOUS, float(xv), float(xv))
    for m in range(inst.n_mhers):
        blk.add_var(chi_name(m), CONTINUOUS, float(z.chi[m]), float(z.chi[m]))
        for e in range(len(inst.eh_nodes)):
            blk.add_var(g0_name(m, e), CONTINUOUS, float(z.g0[m][e]), float(z.g0[m][e]))


def correction(inst: NetworkInstance, x: tuple[int, ...], z: FirstStageDecision, pairs: VUPairSet,
               cfg: AlgorithmConfig | None = None) -> tuple[float, Scenario, Upsilon, RecoursePlan]:
    """max recourse over scenarios in OU(x, z, pairs); returns (C, scenario, upsilon, plan)."""
    cfg = cfg or AlgorithmConfig()
    blk = recourse_block(inst, "_c")
    ou = build_ou_block(inst, pairs, "_c")
    blk.include(ou.block)
    _fixed_first_stage(blk, inst, x, z)
    blk.set_objective(recourse_objective(inst, "_c"), "max")
    sol = solve_milp(blk, cfg.params, cfg.backend)
    if sol.status != OPTIMAL:
        raise SolverError(f"correction problem not solved: {sol.status} {sol.message}", sol.status)
    scen = Scenario(tuple(int(round(sol[u])) for u in ou.u_names),
                    tuple(max(0.0, sol[h]) for h in ou.h0_names))
    plan = plan_from(inst, sol.get, z, scen, "_c")
    return float(sol.objective), scen, plan.upsilon, plan


# -- inner loop ------------------------------------------------------------------


def _gap_closed(lb: float, ub: float, cfg: AlgorithmConfig) -> bool:
    return (ub - lb) / max(abs(lb), cfg.eps0) <= cfg.eps


def solve_worst_case(inst: NetworkInstance, x: tuple[int, ...], z: FirstStageDecision,
                     cfg: AlgorithmConfig | None = None, warm: list[Upsilon] | None = None,
                     outer_n: int = 0, clock: _Clock | None = None, cuts_total: int = 0) -> WorstCaseResult:
    """Inner C&CG plus correction at a fixed first stage."""
    cfg = cfg or AlgorithmConfig()
    clock = clock or _Clock()
    recs: list[IterationRecord] = []
    ys: list[Upsilon] = []
    for ups in warm or []:
        if theta_feasible(inst, z, ups) and all(u.key() != ups.key() for u in ys):
            ys.append(ups)
    lb, ub = -math.inf, math.inf
    best: tuple[Scenario, RecoursePlan] | None = None
    history: list[tuple[int, ...]] = []
    lbs, ubs = [], []
    j = 0
    while True:
        j += 1
        if j > cfg.max_inner:
            raise AlgorithmError(f"inner iteration cap {cfg.max_inner} reached")
        if ys:
            scen, lb, _ = inner_master(inst, x, z, ys, cfg)
            history.append(scen.u)
            recs.append(IterationRecord(outer_n, j, "mp2", lb, ub, clock.ms(), cuts_total))
        else:
            scen = initial_scenario(inst, x, z)
        ups, plan, val = inner_subproblem(inst, z, scen, cfg)
        if val < ub:
            ub, best = val, (scen, plan)
        lbs.append(lb)
        ubs.append(ub)
        recs.append(IterationRecord(outer_n, j, "sp2", lb, ub, clock.ms(), cuts_total))
        if math.isfinite(lb) and _gap_closed(lb, ub, cfg):
            break
        if any(u.key() == ups.key() for u in ys):
            # the master already prices this upsilon at its argmin, so LB >= UB there
            break
        ys.append(ups)
    assert best is not None
    worst, wplan = best
    pairs = VUPairSet()
    for ups in ys:
        mu, _ = extract_extreme_point(inst, z, worst, ups, cfg)
        pairs.add(ups, mu)
    if wplan.upsilon not in pairs:
        mu, _ = extract_extreme_point(inst, z, worst, wplan.upsilon, cfg)
        pairs.add(wplan.upsilon, mu)
    rounds = 0
    while True:
        cval, cscen, cups, _ = correction(inst, x, z, pairs, cfg)
        recs.append(IterationRecord(outer_n, j, "cp", lb, ub, clock.ms(), cuts_total))
        if cval <= ub + cfg.tol:
            break
        rounds += 1
        if rounds > cfg.max_correction:
            raise AlgorithmError(f"correction cap {cfg.max_correction} reached")
        # priced at the worst scenario, so the OU minimum stays at UB and the
        # correction scenario is excluded by weak duality
        mu, _ = extract_extreme_point(inst, z, worst, cups, cfg)
        if not pairs.add(cups, mu):
            # a recorded upsilon cannot beat UB inside OU in exact arithmetic
            log.warning("correction returned a recorded upsilon (C - UB = %.2e); stopping", cval - ub)
            break
    return WorstCaseResult(ub, worst, wplan, pairs, history, j, rounds, lbs, ubs, recs)


# -- outer loop ------------------------------------------------------------------


@dataclass
class _Cut:
    tag: str
    pairs: VUPairSet
    prime_tag: str | None


def _add_cut(master: ConstraintBlock, inst: NetworkInstance, n: int, wc: WorstCaseResult,
             cfg: AlgorithmConfig) -> _Cut:
    tag = f"_{n}"
    rec = recourse_block(inst, tag)
    master.include(rec)
    master.include(build_ou_block(inst, wc.pairs, tag).block)
    q = recourse_objective(inst, tag)
    target = inst.resilience_target
    master.add_row(q, GE, target, name=f"resilience{tag}", group="cut")
    prime_tag = None
    if cfg.ou_prime:
        prime_tag = f"_{n}p"
        ou_p = build_ou_prime_block(inst, wc.scenario.u, wc.history, prime_tag)
        rec_p = recourse_block(inst, prime_tag)
        # the OU' copy owns its u; drop the duplicate declaration from the recourse copy
        for l in inst.vulnerable:
            del rec_p.vars[u_name(l, prime_tag)]
        master.include(ou_p)
        master.include(rec_p)
        for m in range(inst.n_mhers):
            master.add_row({h0_name(m, prime_tag): 1.0, h0_name(m, tag): -1.0}, EQ, 0.0,
                           name=f"h0_share{prime_tag}[{m}]", group="cut")
        master.add_row(recourse_objective(inst, prime_tag), GE, target, name=f"resilience{prime_tag}",
                       group="cut")
    return _Cut(tag, wc.pairs, prime_tag)


def decision_from(inst: NetworkInstance, get) -> FirstStageDecision:
    x = tuple(int(round(get(x_name(l)))) for l in inst.vulnerable)
    chi = tuple(int(round(get(chi_name(m)))) for m in range(inst.n_mhers))
    g0 = tuple(tuple(int(round(get(g0_name(m, e)))) for e in range(len(inst.eh_nodes)))
               for m in range(inst.n_mhers))
    return FirstStageDecision(x, chi, g0)


def solve_coplan(inst: NetworkInstance, cfg: AlgorithmConfig | None = None) -> CoPlanSolution:
    """Minimum-cost hardening and rental plan meeting the worst-case resilience target."""
    cfg = cfg or AlgorithmConfig()
    clock = _Clock()
    master = build_first_stage(inst)
    cuts: list[_Cut] = []
    recs: list[IterationRecord] = []
    mp1_trace: list[float] = []
    inner_total = 0
    incumbent = None
    warm: list[Upsilon] = []
    for n in range(1, cfg.max_outer + 1):
        if clock.ms() / 1e3 > cfg.time_limit:
            raise AlgorithmError(f"time limit {cfg.time_limit}s reached", incumbent, recs)
        sol = solve_milp(master, cfg.params, cfg.backend)
        if sol.status == INFEASIBLE:
            recs.append(IterationRecord(n, 0, "mp1", math.inf, math.inf, clock.ms(), len(cuts)))
            return CoPlanSolution(INFEASIBLE_STATUS, None, None, math.nan, None, n, inner_total,
                                  mp1_trace, recs, clock.ms() / 1e3, cfg)
        if sol.status != OPTIMAL:
            raise SolverError(f"outer master not solved: {sol.status} {sol.message}", sol.status)
        z = decision_from(inst, sol.get)
        incumbent = z
        mp1_trace.append(float(sol.objective))
        recs.append(IterationRecord(n, 0, "mp1", float(sol.objective), math.nan, clock.ms(), len(cuts)))
        if cfg.warm_start:
            warm = [upsilon_from(inst, sol.get, c.tag) for c in cuts]
            warm += [upsilon_from(inst, sol.get, c.prime_tag) for c in cuts if c.prime_tag]
        wc = solve_worst_case(inst, z.x, z, cfg, warm if cfg.warm_start else None, outer_n=n, clock=clock,
                              cuts_total=len(cuts))
        inner_total += wc.inner_iterations
        recs.extend(wc.records)
        log.info("outer %d: cost %.2f worst %.6f (%d inner)", n, sol.objective, wc.value, wc.inner_iterations)
        if wc.value >= inst.resilience_target - cfg.tol:
            return CoPlanSolution(OPTIMAL_STATUS, z, z.exact_cost(inst), wc.value, wc, n, inner_total,
                                  mp1_trace, recs, clock.ms() / 1e3, cfg)
        cuts.append(_add_cut(master, inst, n, wc, cfg))
    raise AlgorithmError(f"outer iteration cap {cfg.max_outer} reached", incumbent, recs)
