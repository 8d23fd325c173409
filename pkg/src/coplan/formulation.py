"""MILP building blocks: first-stage set, recourse set, LP template and dual polytope.

Variable names carry their indices, e.g. ``P[3,2]`` is the active flow on line 3
in period 2. Recourse blocks can be instantiated several times in one model by
passing a ``tag`` that is appended to every recourse-owned name; first-stage
names (``x``, ``chi``, ``g0``) are never tagged so copies share them.

Lines, nodes and MHERs are referenced by position in the instance tuples;
periods run from 1 to |T|; EH nodes are referenced by their position ``e`` in
``inst.eh_nodes``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from coplan.decisions import DualPoint, FirstStageDecision, RecoursePlan, Scenario, Upsilon
from coplan.instance import NetworkInstance
from coplan.model import (BINARY, CONTINUOUS, EQ, GE, INF, LE, CompiledModel, ConstraintBlock,
                          ModelError, linearize_product)

LAMBDA, PI, THETA, LINK = "lambda", "pi", "theta", "link"


def nm(base: str, *idx: int, tag: str = "") -> str:
    return f"{base}[{','.join(str(i) for i in idx)}]{tag}"


def x_name(l: int) -> str:
    return nm("x", l)


def chi_name(m: int) -> str:
    return nm("chi", m)


def g0_name(m: int, e: int) -> str:
    return nm("g0", m, e)


def u_name(l: int, tag: str = "") -> str:
    return nm("u", l, tag=tag)


def h0_name(m: int, tag: str = "") -> str:
    return nm("H0", m, tag=tag)


def gate(inst: NetworkInstance, l: int, t: int, tag: str = "") -> str | None:
    """Variable standing for u_l * omega_{l,t}; None when the product is the constant 1."""
    ln = inst.lines[l]
    if ln.vulnerable and ln.switchable:
        return nm("uw", l, t, tag=tag)
    if ln.vulnerable:
        return u_name(l, tag)
    if ln.switchable:
        return nm("om", l, t, tag=tag)
    return None


# -- first stage ----------------------------------------------------------------


def build_first_stage(inst: NetworkInstance, exact_preallocation: bool = True) -> ConstraintBlock:
    """Hardening x, rental chi and pre-allocation g0 with budget and parking rows.

    With ``exact_preallocation`` a rented MHER must be placed somewhere
    (sum_j g0 = chi); otherwise the row is an inequality.
    """
    blk = ConstraintBlock("first stage")
    obj: dict[str, float] = {}
    for l in inst.vulnerable:
        blk.add_var(x_name(l), BINARY)
        obj[x_name(l)] = inst.lines[l].hardening_cost
    for m, mh in enumerate(inst.fleet.mhers):
        blk.add_var(chi_name(m), BINARY)
        obj[chi_name(m)] = mh.rental
        for e in range(len(inst.eh_nodes)):
            blk.add_var(g0_name(m, e), BINARY)
    if math.isfinite(inst.budget):
        blk.add_row(dict(obj), LE, inst.budget, name="budget")
    for m in range(inst.n_mhers):
        row = {g0_name(m, e): 1.0 for e in range(len(inst.eh_nodes))}
        row[chi_name(m)] = -1.0
        blk.add_row(row, EQ if exact_preallocation else LE, 0.0, name=nm("prealloc", m))
    for e, j in enumerate(inst.eh_nodes):
        if inst.n_mhers:
            blk.add_row({g0_name(m, e): 1.0 for m in range(inst.n_mhers)}, LE,
                        inst.nodes[j].parking, name=nm("parking0", e))
    blk.set_objective(obj, "min")
    return blk


def fix_first_stage(blk: ConstraintBlock, inst: NetworkInstance, z: FirstStageDecision,
                    declare: bool = True) -> None:
    """Declare (if needed) and fix first-stage variables at the values of z."""
    vals = first_stage_values(inst, z)
    for name, v in vals.items():
        if name.startswith("x[") and name not in blk.referenced() and name not in blk.vars:
            continue
        if name not in blk.vars:
            if not declare:
                continue
            blk.add_var(name, BINARY)
        blk.fix(name, v)


def first_stage_values(inst: NetworkInstance, z: FirstStageDecision) -> dict[str, float]:
    out = {x_name(l): float(v) for l, v in zip(inst.vulnerable, z.x)}
    for m in range(inst.n_mhers):
        out[chi_name(m)] = float(z.chi[m])
        for e in range(len(inst.eh_nodes)):
            out[g0_name(m, e)] = float(z.g0[m][e])
    return out


# -- recourse -------------------------------------------------------------------


def recourse_block(inst: NetworkInstance, tag: str = "") -> ConstraintBlock:
    """Parametric recourse feasible set.

    Declares every recourse-owned variable: continuous operation y (free, all
    bounds written as rows), routing gam and switches om (binary), the gated
    products uw, and the scenario variables u (binary) and H0. References
    first-stage chi and g0 without declaring them.

    Row groups: THETA rows hold only binaries; LINK rows linearize uw; LAMBDA
    rows couple y to H0, routing and rental; PI rows couple y to topology.
    """
    N, L, M, T = len(inst.nodes), len(inst.lines), inst.n_mhers, inst.periods
    E = len(inst.eh_nodes)
    ehs, subs = inst.eh_nodes, inst.substations
    sources = sorted(set(subs) | set(ehs))
    fl = inst.fleet
    dt = inst.step_hours
    blk = ConstraintBlock(f"recourse{tag}")
    v = lambda base, *idx: nm(base, *idx, tag=tag)  # noqa: E731
    free = dict(kind=CONTINUOUS, lb=-INF, ub=INF)

    def row(coeffs, sense, rhs, name, group, scale=1.0):
        if scale != 1.0:
            coeffs = {k: c * scale for k, c in coeffs.items()}
            rhs *= scale
        blk.add_row(coeffs, sense, rhs, name=name + tag, group=group)

    # scenario
    for l in inst.vulnerable:
        blk.add_var(u_name(l, tag), BINARY)
    for m, mh in enumerate(fl.mhers):
        blk.add_var(h0_name(m, tag), CONTINUOUS, 0.0, mh.h_max)
    # binaries
    for t in range(1, T + 1):
        for m in range(M):
            for e in range(E):
                blk.add_var(v("gam", m, e, t), BINARY)
        for l in inst.switchable:
            blk.add_var(v("om", l, t), BINARY)
            if inst.lines[l].vulnerable:
                w = v("uw", l, t)
                blk.add_var(w, CONTINUOUS, 0.0, 1.0)
                for r in linearize_product("binary*binary", u_name(l, tag), v("om", l, t), 1.0, w,
                                           declare_w=False).rows:
                    blk.add_row(r.coeffs, r.sense, r.rhs, name=r.name, group=LINK)
    # continuous operation
    for t in range(1, T + 1):
        for l in range(L):
            for base in ("P", "Q", "f"):
                blk.add_var(v(base, l, t), **free)
        for n in range(N):
            for base in ("V", "pl", "ql"):
                blk.add_var(v(base, n, t), **free)
        for n in sources:
            for base in ("p", "q", "g"):
                blk.add_var(v(base, n, t), **free)
        for e in range(E):
            blk.add_var(v("psg", e, t), **free)
            blk.add_var(v("qsg", e, t), **free)
        for m in range(M):
            for base in ("gp", "gq", "H"):
                blk.add_var(v(base, m, t), **free)
            for e in range(E):
                blk.add_var(v("GP", m, e, t), **free)
                blk.add_var(v("GQ", m, e, t), **free)

    # routing rows (binaries only)
    for t in range(1, T + 1):
        for m in range(M):
            r = {v("gam", m, e, t): 1.0 for e in range(E)}
            r[chi_name(m)] = -1.0
            row(r, LE, 0.0, nm("park_one", m, t), THETA)
        for e, j in enumerate(ehs):
            if M:
                row({v("gam", m, e, t): 1.0 for m in range(M)}, LE, inst.nodes[j].parking,
                    nm("park_cap", e, t), THETA)
    for m in range(M):
        for a in range(E):
            for b in range(E):
                if a == b:
                    continue
                for tau in range(1, fl.travel[m][a][b] + 1):
                    for t in range(0, T - tau + 1):
                        first = g0_name(m, a) if t == 0 else v("gam", m, a, t)
                        row({first: 1.0, v("gam", m, b, t + tau): 1.0, chi_name(m): -1.0}, LE, 0.0,
                            nm("travel", m, a, b, tau, t), THETA)
    fixed_closed = sum(1 for l in range(L) if not inst.lines[l].switchable)
    for t in range(1, T + 1):
        if inst.switchable:
            row({v("om", l, t): 1.0 for l in inst.switchable}, EQ, N - len(subs) - fixed_closed,
                nm("radial", t), THETA)
        elif N - len(subs) != fixed_closed:
            raise ModelError("radiality count cannot hold without switchable lines")

    # hydrogen dynamics and MHER outputs (lambda)
    for m, mh in enumerate(fl.mhers):
        burn = dt / (mh.efficiency * fl.conversion)
        for t in range(1, T + 1):
            prev = h0_name(m, tag) if t == 1 else v("H", m, t - 1)
            r = {v("H", m, t): 1.0, prev: -1.0, v("gp", m, t): burn, chi_name(m): mh.travel_rate}
            for e in range(E):
                r[v("gam", m, e, t)] = -mh.travel_rate
            row(r, EQ, 0.0, nm("h2", m, t), LAMBDA)
            s = 1.0 / mh.h_max
            row({v("H", m, t): 1.0, chi_name(m): -mh.h_min}, GE, 0.0, nm("h_lo", m, t), LAMBDA, s)
            row({v("H", m, t): -1.0, chi_name(m): mh.h_max}, GE, 0.0, nm("h_hi", m, t), LAMBDA, s)
            for base, cap in (("gp", mh.p_max), ("gq", mh.q_max)):
                sc = 1.0 / cap if cap > 0 else 1.0
                row({v(base, m, t): 1.0}, GE, 0.0, nm(base + "_lo", m, t), LAMBDA, sc)
                row({v(base, m, t): -1.0}, GE, -cap, nm(base + "_hi", m, t), LAMBDA, sc)
            for e in range(E):
                for big, small, cap in (("GP", "gp", mh.p_max), ("GQ", "gq", mh.q_max)):
                    sc = 1.0 / cap if cap > 0 else 1.0
                    g = v("gam", m, e, t)
                    row({v(big, m, e, t): 1.0}, GE, 0.0, nm(big + "_lo", m, e, t), LAMBDA, sc)
                    row({v(big, m, e, t): -1.0, g: cap}, GE, 0.0, nm(big + "_gam", m, e, t), LAMBDA, sc)
                    row({v(big, m, e, t): 1.0, v(small, m, t): -1.0, g: -cap}, GE, -cap,
                        nm(big + "_link", m, e, t), LAMBDA, sc)
                    row({v(big, m, e, t): -1.0, v(small, m, t): 1.0}, GE, 0.0,
                        nm(big + "_up", m, e, t), LAMBDA, sc)

    # load restoration and node outputs (lambda)
    pd, qd = inst.pd, inst.qd
    for t in range(1, T + 1):
        for n in range(N):
            d = pd[n, t - 1]
            if d > 0:
                row({v("pl", n, t): 1.0}, GE, 0.0, nm("pl_lo", n, t), LAMBDA, 1.0 / d)
                row({v("pl", n, t): -1.0}, GE, -d, nm("pl_hi", n, t), LAMBDA, 1.0 / d)
                row({v("ql", n, t): 1.0, v("pl", n, t): -qd[n, t - 1] / d}, EQ, 0.0, nm("ql_ratio", n, t),
                    LAMBDA)
                dp = pd[n, t - 2] if t > 1 else 0.0
                if t > 1 and dp > 0:
                    row({v("pl", n, t): 1.0 / d, v("pl", n, t - 1): -1.0 / dp}, GE, 0.0,
                        nm("monotone", n, t), LAMBDA)
            else:
                row({v("pl", n, t): 1.0}, EQ, 0.0, nm("pl_zero", n, t), LAMBDA)
                row({v("ql", n, t): 1.0}, EQ, 0.0, nm("ql_zero", n, t), LAMBDA)
        for n in subs:
            nd = inst.nodes[n]
            for base, cap in (("p", nd.p_max), ("q", nd.q_max)):
                sc = 1.0 / cap if cap > 0 else 1.0
                row({v(base, n, t): 1.0}, GE, 0.0, nm(base + "_sub_lo", n, t), LAMBDA, sc)
                row({v(base, n, t): -1.0}, GE, -cap, nm(base + "_sub_hi", n, t), LAMBDA, sc)
        for e, n in enumerate(ehs):
            nd = inst.nodes[n]
            for base, sg, big, cap in (("p", "psg", "GP", nd.p_max), ("q", "qsg", "GQ", nd.q_max)):
                r = {v(base, n, t): 1.0, v(sg, e, t): -1.0}
                for m in range(M):
                    r[v(big, m, e, t)] = -1.0
                row(r, EQ, 0.0, nm(base + "_eh", n, t), LAMBDA)
                sc = 1.0 / cap if cap > 0 else 1.0
                row({v(sg, e, t): 1.0}, GE, 0.0, nm(sg + "_lo", e, t), LAMBDA, sc)
                row({v(sg, e, t): -1.0}, GE, -cap, nm(sg + "_hi", e, t), LAMBDA, sc)

    # network operation (pi)
    Mv, M1 = inst.voltage_big_m, inst.flow_big_m
    src_set = set(sources)
    for t in range(1, T + 1):
        for n in range(N):
            for base, load, gen in (("P", "pl", "p"), ("Q", "ql", "q")):
                r = {v(base, l, t): 1.0 for l in inst.lines_in[n]}
                for l in inst.lines_out[n]:
                    r[v(base, l, t)] = -1.0
                r[v(load, n, t)] = -1.0
                if n in src_set:
                    r[v(gen, n, t)] = 1.0
                row(r, EQ, 0.0, nm("bal_" + base, n, t), PI)
            nd = inst.nodes[n]
            row({v("V", n, t): 1.0}, GE, nd.v_min, nm("v_lo", n, t), PI)
            row({v("V", n, t): -1.0}, GE, -nd.v_max, nm("v_hi", n, t), PI)
            # fictitious single-commodity flow
            r = {v("f", l, t): 1.0 for l in inst.lines_in[n]}
            for l in inst.lines_out[n]:
                r[v("f", l, t)] = -1.0
            if n in src_set:
                r[v("g", n, t)] = 1.0
                row(r, EQ, 0.0, nm("fict_src", n, t), PI)
                row({v("g", n, t): 1.0}, GE, 0.0, nm("g_lo", n, t), PI)
                row({v("g", n, t): -1.0}, GE, -float(N), nm("g_hi", n, t), PI, 1.0 / N)
            else:
                row(r, EQ, 1.0, nm("fict_load", n, t), PI)
        for l, ln in enumerate(inst.lines):
            i, j = inst.endpoints[l]
            gv = gate(inst, l, t, tag)
            drop = {v("V", i, t): 1.0, v("V", j, t): -1.0,
                    v("P", l, t): -ln.r / inst.v_ref, v("Q", l, t): -ln.x / inst.v_ref}
            # V_i - V_j - drop <= M(1 - gate)  and  >= -M(1 - gate)
            up = {k: -c for k, c in drop.items()}
            lo = dict(drop)
            if gv is None:
                row(up, GE, 0.0, nm("vdrop_up", l, t), PI)
                row(lo, GE, 0.0, nm("vdrop_lo", l, t), PI)
            else:
                up[gv] = -Mv
                lo[gv] = -Mv
                row(up, GE, -Mv, nm("vdrop_up", l, t), PI)
                row(lo, GE, -Mv, nm("vdrop_lo", l, t), PI)
            for base, cap in (("P", ln.p_max), ("Q", ln.q_max)):
                for sgn, side in ((1.0, "lo"), (-1.0, "hi")):
                    r = {v(base, l, t): sgn}
                    if gv is None:
                        row(r, GE, -cap, nm(f"{base}cap_{side}", l, t), PI, 1.0 / cap)
                    else:
                        r[gv] = cap
                        row(r, GE, 0.0, nm(f"{base}cap_{side}", l, t), PI, 1.0 / cap)
            og = nm("om", l, t, tag=tag) if ln.switchable else None
            for sgn, side in ((1.0, "lo"), (-1.0, "hi")):
                r = {v("f", l, t): sgn}
                if og is None:
                    row(r, GE, -M1, nm(f"fcap_{side}", l, t), PI, 1.0 / M1)
                else:
                    r[og] = M1
                    row(r, GE, 0.0, nm(f"fcap_{side}", l, t), PI, 1.0 / M1)
    return blk


def recourse_objective(inst: NetworkInstance, tag: str = "") -> dict[str, float]:
    """Restoration ratio as a linear form in pl (denominator folded in)."""
    den = inst.weighted_demand
    out = {}
    for n in range(len(inst.nodes)):
        w = inst.weights[n] / den
        for t in range(1, inst.periods + 1):
            if w and inst.pd[n, t - 1] > 0:
                out[nm("pl", n, t, tag=tag)] = w
    return out


def scenario_values(inst: NetworkInstance, s: Scenario, tag: str = "") -> dict[str, float]:
    out = {u_name(l, tag): float(v) for l, v in zip(inst.vulnerable, s.u)}
    out.update({h0_name(m, tag): float(h) for m, h in enumerate(s.h0)})
    return out


def in_ddu(inst: NetworkInstance, x: tuple[int, ...], z: FirstStageDecision, s: Scenario,
           tol: float = 1e-9) -> bool:
    """Membership of a scenario in the uncertainty set generated by (x, z)."""
    nv = len(inst.vulnerable)
    if sum(s.u) < nv - inst.k or any(ui < xi for ui, xi in zip(s.u, x)):
        return False
    prem_h, prem_cap = 0.0, 0.0
    for m, mh in enumerate(inst.fleet.mhers):
        cap = z.chi[m] * mh.h_max
        if not (inst.sigma1 * cap - tol <= s.h0[m] <= cap + tol):
            return False
        if mh.premium:
            prem_h += s.h0[m]
            prem_cap += cap
    return prem_h >= inst.sigma2 * prem_cap - tol


def build_recourse_milp(inst: NetworkInstance, z: FirstStageDecision, scenario: Scenario) -> ConstraintBlock:
    """Recourse MILP at a fixed first stage and scenario, maximizing the restoration ratio."""
    if not z.feasible(inst):
        raise ModelError("first-stage decision is not feasible")
    if not in_ddu(inst, tuple(0 for _ in z.x), z, scenario):
        raise ModelError("scenario is outside the uncertainty set of the first stage")
    blk = recourse_block(inst)
    fix_first_stage(blk, inst, z)
    for name, val in scenario_values(inst, scenario).items():
        blk.fix(name, val)
    blk.set_objective(recourse_objective(inst), "max")
    return blk


def recourse_model(inst: NetworkInstance) -> CompiledModel:
    """Compiled parametric recourse MILP (first stage and scenario as free columns), cached."""
    cm = inst.cache.get("recourse_model")
    if cm is None:
        blk = recourse_block(inst)
        for m in range(inst.n_mhers):
            blk.add_var(chi_name(m), BINARY)
            for e in range(len(inst.eh_nodes)):
                blk.add_var(g0_name(m, e), BINARY)
        blk.set_objective(recourse_objective(inst), "max")
        cm = blk.compile()
        inst.cache["recourse_model"] = cm
    return cm


def recourse_fixings(inst: NetworkInstance, z: FirstStageDecision, s: Scenario) -> dict[str, float]:
    vals = first_stage_values(inst, z)
    vals = {k: val for k, val in vals.items() if not k.startswith("x[")}
    vals.update(scenario_values(inst, s))
    return vals


def upsilon_from(inst: NetworkInstance, get, tag: str = "") -> Upsilon:
    """Read (gamma, omega) from a solution accessor ``get(name) -> float``."""
    gam = []
    for m in range(inst.n_mhers):
        for e in range(len(inst.eh_nodes)):
            for t in range(1, inst.periods + 1):
                gam.append(int(round(get(nm("gam", m, e, t, tag=tag)))))
    om = []
    for l in inst.switchable:
        for t in range(1, inst.periods + 1):
            om.append(int(round(get(nm("om", l, t, tag=tag)))))
    return Upsilon(tuple(gam), tuple(om))


def plan_from(inst: NetworkInstance, get, z: FirstStageDecision, s: Scenario, tag: str = "") -> RecoursePlan:
    """Collect a solved recourse copy into dense arrays."""
    N, L, M, T, E = len(inst.nodes), len(inst.lines), inst.n_mhers, inst.periods, len(inst.eh_nodes)
    ts = range(1, T + 1)

    def grid(base, rows, shape_rows=None):
        out = np.zeros((shape_rows if shape_rows is not None else len(rows), T))
        for a, r in enumerate(rows):
            for t in ts:
                out[a if shape_rows is None else r, t - 1] = get(nm(base, r, t, tag=tag))
        return out

    arr: dict[str, np.ndarray] = {}
    for base in ("P", "Q", "f"):
        arr[base] = grid(base, range(L))
    for base in ("V", "pl", "ql"):
        arr[base] = grid(base, range(N))
    srcs = sorted(set(inst.substations) | set(inst.eh_nodes))
    for base in ("p", "q", "g"):
        arr[base] = grid(base, srcs, N)
    for base in ("psg", "qsg"):
        arr[base] = grid(base, range(E))
    for base in ("gp", "gq"):
        arr[base] = grid(base, range(M))
    H = np.zeros((M, T + 1))
    for m in range(M):
        H[m, 0] = s.h0[m]
        for t in ts:
            H[m, t] = get(nm("H", m, t, tag=tag))
    arr["H"] = H
    gam = np.zeros((M, E, T))
    GP = np.zeros((M, E, T))
    GQ = np.zeros((M, E, T))
    for m in range(M):
        for e in range(E):
            for t in ts:
                gam[m, e, t - 1] = round(get(nm("gam", m, e, t, tag=tag)))
                GP[m, e, t - 1] = get(nm("GP", m, e, t, tag=tag))
                GQ[m, e, t - 1] = get(nm("GQ", m, e, t, tag=tag))
    arr["gamma"], arr["GP"], arr["GQ"] = gam, GP, GQ
    arr["phi"] = np.array(z.chi, dtype=float)[:, None] - gam.sum(axis=1) if M else np.zeros((0, T))
    om = np.ones((L, T))
    for l in inst.switchable:
        for t in ts:
            om[l, t - 1] = round(get(nm("om", l, t, tag=tag)))
    arr["omega"] = om
    u_full = np.ones(L)
    for l, val in zip(inst.vulnerable, s.u):
        u_full[l] = val
    arr["u"] = u_full
    den = inst.weighted_demand
    obj = float(np.sum(inst.weights[:, None] * arr["pl"]) / den)
    return RecoursePlan(s, z.chi, z.g0, upsilon_from(inst, get, tag), obj, arr)


# -- LP template and duality ---------------------------------------------------


PARAM_KINDS = ("gam", "om", "uw", "u", "H0", "chi")


def _param_kind(name: str) -> str:
    base = name.split("[", 1)[0]
    if base not in PARAM_KINDS:
        raise ModelError(f"unexpected parameter {name!r} in recourse LP rows")
    return base


def _parse_idx(name: str) -> tuple[int, ...]:
    inner = name[name.index("[") + 1:name.index("]")]
    return tuple(int(a) for a in inner.split(","))


@dataclass
class RecourseTemplate:
    """Continuous part of the recourse problem with all binaries/scenario as parameters.

    Rows read A y >= c0 - P p (inequalities) or A y = c0 - P p (equalities);
    the LP is max q^T y with y free. Duals mu satisfy A^T mu = q, mu <= 0 on
    inequality rows.
    """

    inst: NetworkInstance
    y_names: list[str]
    A: sp.csr_matrix
    q: np.ndarray
    c0: np.ndarray
    P: sp.csc_matrix
    param_names: list[str]
    is_eq: np.ndarray
    is_lambda: np.ndarray
    row_names: list[str]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @classmethod
    def build(cls, inst: NetworkInstance) -> "RecourseTemplate":
        cached = inst.cache.get("template")
        if cached is not None:
            return cached
        blk = recourse_block(inst)
        y_names = [n for n, v in blk.vars.items() if v.kind == CONTINUOUS and n.split("[")[0] not in
                   ("uw", "H0")]
        yidx = {n: i for i, n in enumerate(y_names)}
        rows = [r for r in blk.rows if r.group in (LAMBDA, PI)]
        pnames: list[str] = []
        pidx: dict[str, int] = {}
        ai, aj, av, pi_, pj, pv = [], [], [], [], [], []
        c0 = np.zeros(len(rows))
        is_eq = np.zeros(len(rows), dtype=bool)
        is_lam = np.zeros(len(rows), dtype=bool)
        for k, r in enumerate(rows):
            sgn = -1.0 if r.sense == LE else 1.0
            c0[k] = sgn * r.rhs
            is_eq[k] = r.sense == EQ
            is_lam[k] = r.group == LAMBDA
            for name, c in r.coeffs.items():
                if name in yidx:
                    ai.append(k)
                    aj.append(yidx[name])
                    av.append(sgn * c)
                else:
                    _param_kind(name)
                    if name not in pidx:
                        pidx[name] = len(pnames)
                        pnames.append(name)
                    pi_.append(k)
                    pj.append(pidx[name])
                    pv.append(sgn * c)
        A = sp.csr_matrix((av, (ai, aj)), shape=(len(rows), len(y_names)))
        P = sp.csc_matrix((pv, (pi_, pj)), shape=(len(rows), len(pnames)))
        obj = recourse_objective(inst)
        q = np.array([obj.get(n, 0.0) for n in y_names])
        tpl = cls(inst, y_names, A, q, c0, P, pnames, is_eq, is_lam, [r.name for r in rows])
        inst.cache["template"] = tpl
        return tpl

    # parameter bookkeeping

    def param_vector(self, ups: Upsilon, s: Scenario, chi: tuple[int, ...]) -> np.ndarray:
        inst = self.inst
        gam = ups.gamma_array(inst)
        om = np.ones((len(inst.lines), inst.periods))
        om[list(inst.switchable)] = ups.omega_array(inst) if inst.switchable else om[[]]
        u = np.ones(len(inst.lines))
        u[list(inst.vulnerable)] = s.u
        p = np.zeros(len(self.param_names))
        for k, name in enumerate(self.param_names):
            kind, idx = _param_kind(name), _parse_idx(name)
            if kind == "gam":
                p[k] = gam[idx[0], idx[1], idx[2] - 1]
            elif kind == "om":
                p[k] = om[idx[0], idx[1] - 1]
            elif kind == "uw":
                p[k] = u[idx[0]] * om[idx[0], idx[1] - 1]
            elif kind == "u":
                p[k] = u[idx[0]]
            elif kind == "H0":
                p[k] = s.h0[idx[0]]
            else:
                p[k] = chi[idx[0]]
        return p

    def rhs(self, ups: Upsilon, s: Scenario, chi: tuple[int, ...]) -> np.ndarray:
        return self.c0 - self.P @ self.param_vector(ups, s, chi)

    def lp_model(self, ups: Upsilon, s: Scenario, chi: tuple[int, ...]) -> CompiledModel:
        b = self.rhs(ups, s, chi)
        hi = np.where(self.is_eq, b, INF)
        ny = len(self.y_names)
        return CompiledModel(list(self.y_names), self.q.copy(), np.full(ny, -INF), np.full(ny, INF),
                             np.zeros(ny, dtype=bool), self.A, b, hi, "max", 0.0, list(self.row_names))

    @property
    def param_layout(self) -> dict[str, list[tuple[int, tuple[int, ...]]]]:
        """Parameter columns grouped by kind: kind -> [(column, index tuple)]."""
        lay = self.__dict__.get("_layout")
        if lay is None:
            lay = {k: [] for k in PARAM_KINDS}
            for k, name in enumerate(self.param_names):
                lay[_param_kind(name)].append((k, _parse_idx(name)))
            self.__dict__["_layout"] = lay
        return lay

    def affine_parts(self, ups: Upsilon, chi: tuple[int, ...] | None = None):
        """Decompose b(u, H0) = b0 + B u + C H0 (+ X chi when chi is None).

        Returns (b0, B, C, X) with B: rows x |vulnerable|, C: rows x |fleet|,
        X: rows x |fleet| (zero if chi was folded into b0).
        """
        inst = self.inst
        R = self.n_rows
        gam = ups.gamma_array(inst)
        om = np.ones((len(inst.lines), inst.periods))
        if inst.switchable:
            om[list(inst.switchable)] = ups.omega_array(inst)
        vpos = {l: a for a, l in enumerate(inst.vulnerable)}
        lay = self.param_layout
        Pc = self.P
        b0 = self.c0.copy()
        B = np.zeros((R, len(inst.vulnerable)))
        C = np.zeros((R, inst.n_mhers))
        X = np.zeros((R, inst.n_mhers))

        def col(k):
            lo, hi = Pc.indptr[k], Pc.indptr[k + 1]
            return Pc.indices[lo:hi], Pc.data[lo:hi]

        for k, (m, e, t) in lay["gam"]:
            rows, vals = col(k)
            b0[rows] -= vals * gam[m, e, t - 1]
        for k, (l, t) in lay["om"]:
            rows, vals = col(k)
            b0[rows] -= vals * om[l, t - 1]
        for k, (l, t) in lay["uw"]:
            rows, vals = col(k)
            B[rows, vpos[l]] -= vals * om[l, t - 1]
        for k, (l,) in lay["u"]:
            rows, vals = col(k)
            B[rows, vpos[l]] -= vals
        for k, (m,) in lay["H0"]:
            rows, vals = col(k)
            C[rows, m] -= vals
        for k, (m,) in lay["chi"]:
            rows, vals = col(k)
            if chi is None:
                X[rows, m] -= vals
            else:
                b0[rows] -= vals * chi[m]
        return b0, B, C, X


def build_dual_polytope(inst: NetworkInstance) -> ConstraintBlock:
    """Omega_D: mu with sign constraints and A^T mu = q; no decision variables appear."""
    tpl = RecourseTemplate.build(inst)
    blk = ConstraintBlock("dual polytope")
    names = []
    for r in range(tpl.n_rows):
        base = "lam" if tpl.is_lambda[r] else "pi"
        name = nm(base, r)
        names.append(name)
        blk.add_var(name, CONTINUOUS, -INF, INF if tpl.is_eq[r] else 0.0)
    AT = tpl.A.T.tocsr()
    if AT.shape[0] != len(tpl.y_names) or AT.shape[1] != len(names):
        raise ModelError("dual block dimension mismatch")
    for j in range(AT.shape[0]):
        lo, hi = AT.indptr[j], AT.indptr[j + 1]
        blk.add_row({names[r]: val for r, val in zip(AT.indices[lo:hi], AT.data[lo:hi])}, EQ,
                    tpl.q[j], name=f"dual[{tpl.y_names[j]}]")
    return blk


def dual_feasibility_residual(inst: NetworkInstance, mu: DualPoint) -> float:
    tpl = RecourseTemplate.build(inst)
    res = np.abs(tpl.A.T @ mu.mu - tpl.q).max(initial=0.0)
    sign = np.where(tpl.is_eq, 0.0, np.maximum(mu.mu, 0.0)).max(initial=0.0)
    return float(max(res, sign))


def dual_objective(inst: NetworkInstance, mu: DualPoint, ups: Upsilon, s: Scenario,
                   chi: tuple[int, ...]) -> float:
    """mu^T b(ups, s, chi): lambda^T(f - G H0 - W gamma) + pi^T(h - L(omega o u))."""
    tpl = RecourseTemplate.build(inst)
    if len(mu.mu) != tpl.n_rows:
        raise ModelError("dual point has the wrong dimension")
    return float(mu.mu @ tpl.rhs(ups, s, chi))
