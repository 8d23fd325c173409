"""Seeded instance suites shared by the acceptance harness and the CLI tests."""

from __future__ import annotations

import numpy as np

from coplan.generate import ieee14_shaped, random_instance
from coplan.oracle import first_stage_candidates

TREND_LINES = ("2-3", "3-4", "5-6", "6-7", "2-9", "10-11", "12-13")


def worst_case_case(i: int):
    """(instance, first stage) pair number ``i``: up to 8 vulnerable lines, k <= 3, 1-3 MHERs, 2-4 periods."""
    inst = random_instance(100 + i, n_nodes=(5, 10), n_vulnerable=4 + i % 5, n_mhers=1 + i % 3,
                           periods=2 + i % 3)
    cands = first_stage_candidates(inst)
    rng = np.random.default_rng(100 + i)
    return inst, cands[int(rng.integers(len(cands)))]


def worst_case_suite(count: int = 50):
    return [worst_case_case(i) for i in range(count)]


def trend_instance(k: int, target: float):
    """Fixed 14-node-shaped instance for the monotonicity trends."""
    return ieee14_shaped(k=k, target=target, periods=2, fleet_types=(0, 2), premium_from=1,
                         vulnerable=TREND_LINES)
