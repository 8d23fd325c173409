import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from coplan.ddu import enumerate_scenario_vertices, h0_vertices, polytope_vertices, relaxed_ddu_matrix
from coplan.decisions import Scenario
from coplan.formulation import RecourseTemplate, dual_objective, in_ddu
from coplan.generate import random_instance
from coplan.instance import instance_to_dict, load_instance, restoration_ratio, serialize
from coplan.npccg import extract_extreme_point, inner_subproblem, solve_worst_case
from coplan.oracle import first_stage_candidates
from coplan.solver import solve_lp_with_duals

SLOW = settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])
FAST = settings(max_examples=40, deadline=None)

seeds = st.integers(0, 10_000)


def small(seed):
    return random_instance(seed, n_vulnerable=4, n_mhers=2, periods=2, n_nodes=(4, 7))


def pick(draw_index, items):
    return items[draw_index % len(items)]


@SLOW
@given(seeds, st.integers(0, 10_000), st.integers(0, 10_000))
def test_recourse_value_in_unit_interval(seed, zi, si):
    inst = small(seed)
    z = pick(zi, first_stage_candidates(inst))
    s = pick(si, enumerate_scenario_vertices(inst, z.x, z))
    _, plan, val = inner_subproblem(inst, z, s)
    assert -1e-9 <= val <= 1 + 1e-9
    assert restoration_ratio(inst, plan.pl) == pytest.approx(val, abs=1e-6)


@SLOW
@given(seeds, st.integers(0, 10_000), st.integers(0, 10_000))
def test_more_damage_never_helps(seed, zi, li):
    inst = small(seed)
    z = pick(zi, first_stage_candidates(inst))
    h0 = h0_vertices(inst, z.chi)[-1]
    intact = Scenario((1,) * len(inst.vulnerable), h0)
    free = [a for a, xa in enumerate(z.x) if not xa]
    if not free or inst.k == 0:
        return
    u = list(intact.u)
    u[pick(li, free)] = 0
    _, _, v_full = inner_subproblem(inst, z, intact)
    _, _, v_hit = inner_subproblem(inst, z, Scenario(tuple(u), h0))
    assert v_hit <= v_full + 1e-7


@SLOW
@given(seeds, st.integers(0, 10_000))
def test_less_hydrogen_never_helps(seed, si):
    inst = small(seed)
    z = first_stage_candidates(inst)[-1]
    verts = h0_vertices(inst, z.chi)
    if not any(z.chi):
        return
    u = pick(si, enumerate_scenario_vertices(inst, z.x, z)).u
    lo, hi = verts[0], tuple(max(a) for a in zip(*verts))
    _, _, v_lo = inner_subproblem(inst, z, Scenario(u, lo))
    _, _, v_hi = inner_subproblem(inst, z, Scenario(u, hi))
    assert v_lo <= v_hi + 1e-7


@FAST
@given(seeds, st.floats(0.1, 10.0), st.integers(0, 10_000))
def test_ratio_monotone_and_scale_invariant(seed, c, ri):
    inst = small(seed)
    rng = np.random.default_rng(ri)
    pl = inst.pd * rng.random(inst.pd.shape)
    more = np.minimum(pl + inst.pd * rng.random(inst.pd.shape), inst.pd)
    r = restoration_ratio(inst, pl)
    assert 0.0 <= r <= restoration_ratio(inst, more) <= 1.0 + 1e-12
    doc = instance_to_dict(inst)
    for item in doc["nodes"]["items"]:
        item["priority"] = item.get("priority", 1.0) * c
    scaled = load_instance(doc)
    assert restoration_ratio(scaled, pl) == pytest.approx(r, rel=1e-12)


@FAST
@given(seeds, st.integers(1, 8), st.integers(1, 3), st.integers(1, 4))
def test_serialize_round_trip(seed, nv, nm, periods):
    inst = random_instance(seed, n_vulnerable=nv, n_mhers=nm, periods=periods)
    back = load_instance(json.loads(serialize(inst)))
    assert instance_to_dict(back) == instance_to_dict(inst)


@FAST
@given(seeds, st.integers(0, 10_000))
def test_relaxed_vertices_are_binary(seed, zi):
    inst = random_instance(seed, n_vulnerable=5, n_mhers=2, periods=1)
    z = pick(zi, first_stage_candidates(inst))
    C, d = relaxed_ddu_matrix(inst, z.x, z.chi)
    V = polytope_vertices(C, d)
    nv = len(inst.vulnerable)
    assert len(V)
    assert np.all(np.abs(V[:, :nv] - np.round(V[:, :nv])) <= 1e-9)


@SLOW
@given(seeds, st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
def test_strong_duality_at_random_fixings(seed, zi, ai, bi):
    inst = small(seed)
    z = pick(zi, first_stage_candidates(inst))
    scen = enumerate_scenario_vertices(inst, z.x, z)
    ups, _, _ = inner_subproblem(inst, z, pick(ai, scen))
    s = pick(bi, scen)
    mu, val = extract_extreme_point(inst, z, s, ups)
    tpl = RecourseTemplate.build(inst)
    primal = solve_lp_with_duals(tpl.lp_model(ups, s, z.chi)).objective
    assert abs(dual_objective(inst, mu, ups, s, z.chi) - primal) <= 1e-8
    assert val == pytest.approx(primal, abs=1e-12)


@SLOW
@given(seeds, st.integers(0, 10_000))
def test_worst_case_is_a_member_with_matching_value(seed, zi):
    inst = small(seed)
    z = pick(zi, first_stage_candidates(inst))
    wc = solve_worst_case(inst, z.x, z)
    assert in_ddu(inst, z.x, z, wc.scenario)
    _, _, val = inner_subproblem(inst, z, wc.scenario)
    assert wc.value == pytest.approx(val, abs=1e-7)
