import copy
import json

import pytest

from coplan.generate import random_instance
from coplan.instance import bundled_instance, instance_to_dict


@pytest.fixture(scope="session")
def tri():
    return bundled_instance("tri")


@pytest.fixture
def tri_doc(tri):
    return copy.deepcopy(instance_to_dict(tri))


@pytest.fixture(scope="session")
def micro():
    """Small seeded instances shared by module tests."""
    return [random_instance(s, n_vulnerable=4, n_mhers=2, periods=2) for s in range(3)]


def two_node_doc(weights=(2.0, 1.0), demand=(100.0, 100.0)) -> dict:
    """Substation feeding two load nodes, one period, no fleet."""
    return {
        "schema": 1, "name": "two",
        "nodes": {"v_ref": 1.0, "items": [
            {"id": "s", "kind": "substation", "v_min": 0.95, "v_max": 1.05,
             "substation": {"p_max": 500, "q_max": 500}},
            {"id": "a", "kind": "load", "v_min": 0.95, "v_max": 1.05, "priority": weights[0]},
            {"id": "b", "kind": "load", "v_min": 0.95, "v_max": 1.05, "priority": weights[1]},
        ]},
        "lines": [
            {"id": "s-a", "from": "s", "to": "a", "r": 1e-4, "x": 1e-4, "p_max": 500, "q_max": 500,
             "switchable": True, "vulnerable": True},
            {"id": "s-b", "from": "s", "to": "b", "r": 1e-4, "x": 1e-4, "p_max": 500, "q_max": 500,
             "switchable": True, "vulnerable": True},
        ],
        "mhers": {"conversion": 38.9, "fleet": [], "travel_times": []},
        "loads": {"periods": 1, "step_hours": 1.0, "profiles": {
            "a": {"p": [demand[0]], "q": [0.3 * demand[0]]},
            "b": {"p": [demand[1]], "q": [0.3 * demand[1]]},
        }},
        "costs": {"hardening": {"s-a": 1000, "s-b": 2000}, "budget": None},
        "uncertainty": {"k": 1, "sigma1": 0.7, "sigma2": 0.9},
        "solver": {"resilience_target": 0.5, "big_m": {"voltage": None, "flow": None}, "backend": "highs"},
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc)


def chain_doc(fleet: bool = True) -> dict:
    """tri without its tie line; only the substation feeder 1-2 is vulnerable."""
    doc = copy.deepcopy(instance_to_dict(bundled_instance("tri")))
    doc["lines"] = [dict(l, vulnerable=l["id"] == "1-2") for l in doc["lines"] if l["id"] != "1-3"]
    doc["costs"]["hardening"] = {"1-2": 120000}
    if not fleet:
        doc["mhers"]["fleet"] = []
    return doc
