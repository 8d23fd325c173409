import itertools
from math import comb

import numpy as np
import pytest

from coplan.ddu import (EnumerationCapError, build_ddu_polytope, build_ou_block, build_ou_prime_block,
                        enumerate_scenario_vertices, h0_vertices, ou_prime_weights, polytope_vertices,
                        relaxed_ddu_matrix, u_patterns)
from coplan.decisions import DualPoint, FirstStageDecision, Scenario, VUPairSet
from coplan.formulation import RecourseTemplate, chi_name, dual_objective, h0_name, in_ddu, u_name, x_name
from coplan.generate import random_instance
from coplan.instance import load_instance
from coplan.model import BINARY, CONTINUOUS, ConstraintBlock, ModelError
from coplan.npccg import extract_extreme_point, inner_subproblem
from coplan.solver import OPTIMAL, solve_milp


@pytest.fixture(scope="module")
def five():
    inst = random_instance(3, n_nodes=(7, 8), n_vulnerable=5, k=2, n_mhers=1)
    assert len(inst.vulnerable) == 5
    return inst


def empty_z(inst, chi=None):
    chi = chi or (0,) * inst.n_mhers
    E = len(inst.eh_nodes)
    g0 = tuple(tuple(int(c and e == m % E) for e in range(E)) for m, c in enumerate(chi))
    return FirstStageDecision((0,) * len(inst.vulnerable), tuple(chi), g0)


def two_premium(tri_doc):
    tri_doc["mhers"]["fleet"].append({"id": "M2", "h_max": 45, "h_min": 4.5, "p_max": 200, "q_max": 300,
                                      "efficiency": 0.52, "travel_rate": 1.0, "rental": 8450.0,
                                      "premium": True})
    tri_doc["nodes"]["items"][2]["parking"] = 2
    return load_instance(tri_doc)


# -- uncertainty set ----------------------------------------------------------------


def test_pattern_count_with_one_hardened_line(five):
    pats = u_patterns(five, (1, 0, 0, 0, 0))
    assert len(pats) == comb(4, 0) + comb(4, 1) + comb(4, 2) == 11
    assert all(p[0] == 1 for p in pats)


def test_unrented_mher_has_no_storage(tri):
    assert h0_vertices(tri, (0,)) == [(0.0,)]
    blk = build_ddu_polytope(tri, (0, 0), empty_z(tri), relaxed=True)
    blk.set_objective({h0_name(0): 1.0}, "max")
    assert solve_milp(blk).objective == 0.0


def test_floors_from_sigmas(tri):
    blk = build_ddu_polytope(tri, (0, 0), empty_z(tri, (1,)), relaxed=True)
    rows = {r.name: r for r in blk.rows}
    assert rows["h0_lo[0]"].rhs == pytest.approx(0.7 * 30)
    assert rows["premium"].rhs == pytest.approx(0.9 * 30)


def test_symbolic_mode_needs_enclosing_model(tri):
    with pytest.raises(ModelError):
        build_ddu_polytope(tri, None, None)
    outer = ConstraintBlock()
    build_ddu_polytope(tri, None, None, enclosing=outer)
    assert x_name(tri.vulnerable[0]) in outer.referenced()


def test_no_damage_budget_gives_intact_pattern(tri):
    inst = tri.replace(k=0)
    scen = enumerate_scenario_vertices(inst, (0, 0), empty_z(inst, (1,)))
    assert {s.u for s in scen} == {(1, 1)}


def test_single_premium_vertices(tri):
    assert h0_vertices(tri, (1,)) == [(27.0,), (30.0,)]


def test_two_premium_vertices(tri_doc):
    inst = two_premium(tri_doc)
    verts = h0_vertices(inst, (1, 1))
    assert sorted(verts) == [(22.5, 45.0), (30.0, 37.5), (30.0, 45.0)]
    assert all(sum(v) >= 67.5 - 1e-9 for v in verts)


def test_enumeration_cap(five):
    with pytest.raises(EnumerationCapError) as info:
        u_patterns(five, (0,) * 5, cap=4)
    assert info.value.size == 5


def test_scenarios_are_members(five):
    z = empty_z(five, (1,))
    for s in enumerate_scenario_vertices(five, (0, 1, 0, 0, 0), z):
        assert in_ddu(five, (0, 1, 0, 0, 0), z, s)


def test_polytope_vertices_of_unit_square():
    C = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    d = np.array([0.0, 0.0, -1.0, -1.0])
    V = polytope_vertices(C, d)
    assert sorted(map(tuple, V.tolist())) == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]


def test_relaxed_vertices_have_integral_u(five):
    C, d = relaxed_ddu_matrix(five, (0, 0, 1, 0, 0), (1,))
    V = polytope_vertices(C, d)
    assert len(V)
    assert np.allclose(V[:, :5], np.round(V[:, :5]), atol=1e-9)


# -- OU block -----------------------------------------------------------------------


def _host(inst, x, chi, u_kind=BINARY):
    blk = ConstraintBlock()
    for l, xv in zip(inst.vulnerable, x):
        blk.add_var(x_name(l), CONTINUOUS, float(xv), float(xv))
        blk.add_var(u_name(l), u_kind, 0.0, 1.0)
    for m, mh in enumerate(inst.fleet.mhers):
        blk.add_var(chi_name(m), CONTINUOUS, float(chi[m]), float(chi[m]))
        blk.add_var(h0_name(m), CONTINUOUS, 0.0, mh.h_max)
    return blk


def _pair(inst, z, s):
    ups, _, _ = inner_subproblem(inst, z, s)
    mu, _ = extract_extreme_point(inst, z, s, ups)
    pairs = VUPairSet()
    pairs.add(ups, mu)
    return pairs, ups, mu


def _direct_lp(inst, x, z, ups, mu):
    """min mu^T b(u, H0) over the relaxed set, with b built from the template rows."""
    tpl = RecourseTemplate.build(inst)
    b0, B, C, _ = tpl.affine_parts(ups, z.chi)
    blk = build_ddu_polytope(inst, x, z, relaxed=True)
    coeffs = {u_name(l): float(mu.mu @ B[:, a]) for a, l in enumerate(inst.vulnerable)}
    coeffs.update({h0_name(m): float(mu.mu @ C[:, m]) for m in range(inst.n_mhers)})
    blk.set_objective(coeffs, "min", constant=float(mu.mu @ b0))
    return solve_milp(blk)


def test_ou_block_matches_direct_lp(tri):
    z = FirstStageDecision((0, 0), (1,), ((1,),))
    pairs, ups, mu = _pair(tri, z, Scenario((1, 1), (27.0,)))
    for x in ((0, 0), (1, 0), (0, 1)):
        blk = _host(tri, x, z.chi)
        ou = build_ou_block(tri, pairs)
        blk.include(ou.block)
        blk.set_objective({ou.eta: 1.0}, "min")
        got = solve_milp(blk)
        ref = _direct_lp(tri, x, z, ups, mu)
        assert got.status == OPTIMAL and ref.status == OPTIMAL
        assert got.objective == pytest.approx(ref.objective, abs=1e-8)
        # the KKT point's scenario prices to the same value through the dual objective
        s = Scenario(tuple(int(round(got[u])) for u in ou.u_names), tuple(got[h] for h in ou.h0_names))
        assert dual_objective(tri, mu, ups, s, z.chi) == pytest.approx(ref.objective, abs=1e-8)


def test_ou_block_u_integral_without_branching(micro):
    inst = micro[0]
    z = empty_z(inst, (1,) + (0,) * (inst.n_mhers - 1))
    x = (0,) * len(inst.vulnerable)
    s = Scenario(tuple(0 if a < inst.k else 1 for a in range(len(inst.vulnerable))), h0_vertices(inst, z.chi)[0])
    pairs, _, _ = _pair(inst, z, s)
    blk = _host(inst, x, z.chi, u_kind=CONTINUOUS)
    ou = build_ou_block(inst, pairs)
    blk.include(ou.block)
    blk.set_objective({ou.eta: 1.0}, "min")
    sol = solve_milp(blk)
    u = np.array([sol[n] for n in ou.u_names])
    assert np.allclose(u, np.round(u), atol=1e-7)


def test_ou_block_admits_all_points_when_objective_is_constant(tri):
    z = FirstStageDecision((0, 0), (1,), ((1,),))
    pairs, ups, _ = _pair(tri, z, Scenario((1, 1), (30.0,)))
    tpl = RecourseTemplate.build(tri)
    _, B, C, X = tpl.affine_parts(ups, chi=None)
    mu = np.zeros(tpl.n_rows)
    free = np.flatnonzero((np.abs(B).sum(1) == 0) & (np.abs(C).sum(1) == 0) & (np.abs(X).sum(1) == 0))
    mu[free[0]] = -1.0
    flat = VUPairSet()
    flat.add(ups, DualPoint(mu, tpl.is_lambda))
    for s in enumerate_scenario_vertices(tri, (0, 0), z):
        blk = _host(tri, (0, 0), z.chi)
        ou = build_ou_block(tri, flat)
        blk.include(ou.block)
        for name, v in zip(ou.u_names + ou.h0_names, s.u + s.h0):
            blk.fix(name, float(v))
        blk.set_objective({}, "min")
        assert solve_milp(blk).status == OPTIMAL


def test_ou_block_needs_pairs(tri):
    with pytest.raises(ModelError):
        build_ou_block(tri, VUPairSet())


# -- OU' block ----------------------------------------------------------------------


def test_prime_weights_without_history(five):
    w = ou_prime_weights(five, (1, 0, 1, 1, 0), [])
    m2 = 10.0 * 5
    assert w.tolist() == [0.0, m2, 0.0, 0.0, m2]


def _prime_solution(inst, u_star, x, history=()):
    blk = ConstraintBlock()
    for l, xv in zip(inst.vulnerable, x):
        blk.add_var(x_name(l), CONTINUOUS, float(xv), float(xv))
    blk.include(build_ou_prime_block(inst, u_star, list(history), "_p"))
    blk.set_objective({}, "min")
    sol = solve_milp(blk)
    assert sol.status == OPTIMAL
    return tuple(int(round(sol[u_name(l, "_p")])) for l in inst.vulnerable)


def _argmin_by_enumeration(inst, u_star, x, history=()):
    w = ou_prime_weights(inst, u_star, list(history))
    pats = u_patterns(inst, x)
    vals = [float(w @ np.array(p)) for p in pats]
    best = min(vals)
    return {p for p, v in zip(pats, vals) if v <= best + 1e-9}


def test_prime_singleton_without_overlap(five):
    u_star = (1, 0, 1, 1, 0)
    x = (1, 0, 0, 0, 0)
    history = [(0, 1, 1, 1, 1), (1, 0, 1, 1, 0)]
    assert _argmin_by_enumeration(five, u_star, x, history) == {u_star}
    assert _prime_solution(five, u_star, x, history) == u_star


def test_prime_differs_when_hardening_overlaps(five):
    u_star = (1, 0, 1, 1, 0)
    x = (0, 1, 0, 0, 0)
    assert u_star not in _argmin_by_enumeration(five, u_star, x)
    assert _prime_solution(five, u_star, x) != u_star
