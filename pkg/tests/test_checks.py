import copy

import pytest

from coplan.checks import check_plan
from coplan.decisions import FirstStageDecision, Scenario
from coplan.npccg import inner_subproblem


@pytest.fixture(scope="module")
def plan(tri):
    z = FirstStageDecision((0, 0), (1,), ((1,),))
    _, plan, _ = inner_subproblem(tri, z, Scenario((0, 1), (27.0,)))
    return plan


def corrupt(plan, name, fn):
    bad = copy.deepcopy(plan)
    arr = bad.arrays[name]
    fn(arr)
    return bad


def test_clean_plan_passes(tri, plan):
    assert check_plan(tri, plan) == []


def test_extra_closed_line_flagged(tri, plan):
    def close_all(om):
        om[:] = 1.0
    assert any("radial" in v for v in check_plan(tri, corrupt(plan, "omega", close_all)))


def test_flow_on_damaged_line_flagged(tri, plan):
    def push(P):
        P[0, 0] = 5.0
    assert any("carries flow" in v for v in check_plan(tri, corrupt(plan, "P", push)))


def test_hydrogen_balance_flagged(tri, plan):
    def leak(H):
        H[0, -1] += 1e-3
    assert any("hydrogen" in v for v in check_plan(tri, corrupt(plan, "H", leak)))


def test_overserved_load_flagged(tri, plan):
    def over(pl):
        pl[1, 0] = tri.pd[1, 0] + 1.0
    out = check_plan(tri, corrupt(plan, "pl", over))
    assert any("outside [0, demand]" in v for v in out)
    assert any("objective" in v for v in out)


def test_decreasing_ratio_flagged(tri, plan):
    assert plan.pl[1, 0] > 0
    def drop(pl):
        pl[1, 1] = 0.5 * pl[1, 0] * tri.pd[1, 1] / tri.pd[1, 0]
    out = check_plan(tri, corrupt(plan, "pl", drop))
    assert any("decreased" in v for v in out)
