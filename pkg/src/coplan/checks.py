"""Physics audit of recourse plans, independent of the model builder."""

from __future__ import annotations

import numpy as np

from coplan.decisions import RecoursePlan
from coplan.instance import NetworkInstance

H2_TOL = 1e-9
TOL = 1e-6


def _components(n: int, edges: list[tuple[int, int]]) -> list[int]:
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    return [find(a) for a in range(n)]


def check_plan(inst: NetworkInstance, plan: RecoursePlan, tol: float = TOL, h2_tol: float = H2_TOL) -> list[str]:
    """Return a list of violated physical properties (empty when the plan is sound)."""
    out: list[str] = []
    N, T = len(inst.nodes), inst.periods
    om, u = plan.omega, plan.u
    sources = set(inst.substations) | set(inst.eh_nodes)
    for t in range(T):
        closed = [l for l in range(len(inst.lines)) if om[l, t] > 0.5]
        if len(closed) != N - len(inst.substations):
            out.append(f"t={t + 1}: {len(closed)} closed lines, radial count is {N - len(inst.substations)}")
        comp = _components(N, [inst.endpoints[l] for l in closed])
        fed = {comp[s] for s in sources}
        for n in range(N):
            if n not in sources and comp[n] not in fed:
                out.append(f"t={t + 1}: node {inst.nodes[n].id} not connected to a source")
        for l in range(len(inst.lines)):
            live = om[l, t] > 0.5 and u[l] > 0.5
            if not live and (abs(plan.P[l, t]) > tol or abs(plan.Q[l, t]) > tol):
                out.append(f"t={t + 1}: open or damaged line {inst.lines[l].id} carries flow")
        for n, nd in enumerate(inst.nodes):
            if not nd.v_min - tol <= plan.V[n, t] <= nd.v_max + tol:
                out.append(f"t={t + 1}: voltage at {nd.id} out of bounds")
    fl = inst.fleet
    for m, mh in enumerate(fl.mhers):
        burn = inst.step_hours / (mh.efficiency * fl.conversion)
        H = plan.H[m]
        for t in range(1, T + 1):
            phi = plan.chi[m] - plan.gamma[m, :, t - 1].sum()
            expect = H[t - 1] - burn * plan.gp[m, t - 1] - mh.travel_rate * phi
            if abs(H[t] - expect) > h2_tol * max(1.0, mh.h_max):
                out.append(f"{mh.id} t={t}: hydrogen balance off by {H[t] - expect:.3e}")
            lo, hi = plan.chi[m] * mh.h_min, plan.chi[m] * mh.h_max
            if not lo - tol <= H[t] <= hi + tol:
                out.append(f"{mh.id} t={t}: hydrogen {H[t]:.4f} outside [{lo}, {hi}]")
            parked = plan.gamma[m, :, t - 1].sum()
            if parked > 1 + tol or abs(parked + plan.phi[m, t - 1] - plan.chi[m]) > tol:
                out.append(f"{mh.id} t={t}: parking and travel states inconsistent")
    pd = inst.pd
    for n in range(N):
        for t in range(T):
            if plan.pl[n, t] < -tol or plan.pl[n, t] > pd[n, t] + tol:
                out.append(f"node {inst.nodes[n].id} t={t + 1}: restored load outside [0, demand]")
            if t and pd[n, t] > 0 and pd[n, t - 1] > 0:
                if plan.pl[n, t] / pd[n, t] < plan.pl[n, t - 1] / pd[n, t - 1] - tol:
                    out.append(f"node {inst.nodes[n].id} t={t + 1}: restoration ratio decreased")
    ratio = float(np.sum(inst.weights[:, None] * plan.pl) / inst.weighted_demand)
    if abs(ratio - plan.objective) > tol:
        out.append("objective differs from the restoration ratio of the plan")
    return out
