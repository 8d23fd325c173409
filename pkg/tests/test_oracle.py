import math

import numpy as np
import pytest

from conftest import chain_doc
from coplan.ddu import EnumerationCapError, enumerate_scenario_vertices, u_patterns
from coplan.decisions import FirstStageDecision, Scenario
from coplan.generate import random_instance
from coplan.instance import load_instance
from coplan.npccg import inner_subproblem
from coplan.oracle import (OracleCache, brute_force_coplan, brute_force_worst_case, first_stage_candidates,
                           worst_case_table)


def test_zero_target_gives_empty_plan(micro):
    inst = micro[0].replace(resilience_target=0.0)
    bf = brute_force_coplan(inst)
    assert bf.status == "optimal" and bf.src == 0
    assert bf.decision == FirstStageDecision.empty(inst)


def test_rental_only_plan_is_cheapest():
    inst = load_instance(chain_doc()).replace(resilience_target=0.8)
    bf = brute_force_coplan(inst)
    assert bf.src == 8300
    assert bf.decision.x == (0,) and bf.decision.chi == (1,)
    assert bf.certified_ratio == pytest.approx(200 / 210, abs=1e-9)


def test_infeasible_when_no_plan_qualifies():
    inst = load_instance(chain_doc(fleet=False)).replace(resilience_target=0.9, budget=0.0)
    bf = brute_force_coplan(inst)
    assert bf.status == "infeasible" and bf.decision is None and math.isnan(bf.certified_ratio)


def test_k_zero_is_intact_recourse(micro):
    inst = micro[1].replace(k=0)
    z = first_stage_candidates(inst)[-1]
    val, s = brute_force_worst_case(inst, z.x, z)
    assert s.u == (1,) * len(inst.vulnerable)
    _, _, direct = inner_subproblem(inst, z, s)
    assert val == pytest.approx(direct, abs=1e-9)


def test_minimum_over_eleven_patterns():
    inst = random_instance(3, n_nodes=(7, 8), n_vulnerable=5, k=2, n_mhers=1)
    x = (1, 0, 0, 0, 0)
    z = FirstStageDecision(x, (0,), ((0,) * len(inst.eh_nodes),))
    assert len(u_patterns(inst, x)) == 11
    cache = OracleCache(inst)
    val, _ = brute_force_worst_case(inst, x, z, cache)
    assert cache.solves == len(enumerate_scenario_vertices(inst, x, z))
    assert all(val <= v for v in cache.values.values())
    assert val == min(cache.values.values())


def test_order_invariance(micro):
    inst = micro[2]
    z = first_stage_candidates(inst)[-1]
    val, _ = brute_force_worst_case(inst, z.x, z)
    scen = enumerate_scenario_vertices(inst, z.x, z)
    cache = OracleCache(inst)
    for perm in (scen[::-1], [scen[i] for i in np.random.default_rng(0).permutation(len(scen))]):
        assert min(cache.value(z, s) for s in perm) == val


def test_determinism(micro):
    a = worst_case_table(micro[0])
    b = worst_case_table(micro[0])
    assert [(r.decision, r.worst, r.scenario) for r in a] == [(r.decision, r.worst, r.scenario) for r in b]


def test_candidates_are_feasible_and_sorted(micro):
    inst = micro[1]
    cands = first_stage_candidates(inst)
    costs = [z.exact_cost(inst) for z in cands]
    assert costs == sorted(costs)
    assert all(z.feasible(inst) for z in cands)
    assert len(set(cands)) == len(cands)


def test_candidate_cap():
    inst = random_instance(0, n_vulnerable=4, n_mhers=2)
    with pytest.raises(EnumerationCapError) as info:
        first_stage_candidates(inst, cap=10)
    assert info.value.size == 11


def test_optima_share_the_minimum_cost(micro):
    inst = micro[0]
    table = worst_case_table(inst)
    bf = brute_force_coplan(inst, table, max_optima=3)
    assert bf.status == "optimal"
    assert 1 <= len(bf.optima) <= 3
    assert all(z.exact_cost(inst) == bf.src for z in bf.optima)
    cheaper = [r for r in table if r.cost < bf.src]
    assert all(r.worst < inst.resilience_target - 1e-6 for r in cheaper)


def test_cache_keys_ignore_hardening(micro):
    inst = micro[0]
    cache = OracleCache(inst)
    z0 = FirstStageDecision.empty(inst)
    z1 = FirstStageDecision((1,) * len(inst.vulnerable), z0.chi, z0.g0)
    s = Scenario((1,) * len(inst.vulnerable), (0.0,) * inst.n_mhers)
    assert cache.value(z0, s) == cache.value(z1, s)
    assert cache.solves == 1
