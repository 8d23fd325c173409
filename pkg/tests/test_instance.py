import json

import numpy as np
import pytest

from coplan.instance import (ParseError, ValidationError, bundled_instance, instance_from_dict,
                             load_instance, restoration_ratio, serialize, validate)

from conftest import two_node_doc


def test_minimal_three_node_document(tri):
    assert len(tri.lines) == 3
    assert len(tri.eh_nodes) == 1
    assert len(tri.substations) == 1
    assert [tri.lines[l].id for l in tri.vulnerable] == ["1-2", "2-3"]
    assert [ln.id for ln in tri.lines if ln.tie] == ["1-3"]


def test_sigma_order_violation(tri_doc):
    tri_doc["uncertainty"].update(sigma1=0.9, sigma2=0.7)
    with pytest.raises(ValidationError, match="σ₁ ≤ σ₂ violated"):
        load_instance(tri_doc)


def test_fourteen_node_layout():
    inst = bundled_instance("ieee14")
    assert len(inst.nodes) == 14
    assert {ln.id for ln in inst.lines if ln.tie} == {"5-11", "8-14"}
    parking_eh = [j for j in inst.eh_nodes if inst.nodes[j].parking > 0]
    generators = [j for j in inst.eh_nodes if inst.nodes[j].p_max > 0]
    assert len(parking_eh) == 6
    assert inst.n_mhers == 6
    assert len(generators) == 2


def test_valid_instance_has_no_failures(tri):
    assert validate(tri).failures == []


def test_k_exceeds_vulnerable_count(tri_doc):
    tri_doc["uncertainty"]["k"] = 3
    rep = validate(instance_from_dict(tri_doc))
    assert any("k exceeds vulnerable line count" in c.detail for c in rep.failures)


def test_tie_line_listed_vulnerable(tri_doc):
    tri_doc["lines"][2]["vulnerable"] = True
    tri_doc["costs"]["hardening"]["1-3"] = 1.0
    rep = validate(instance_from_dict(tri_doc))
    bad = [c for c in rep.failures if c.name == "tie lines invulnerable"]
    assert bad and "1-3" in bad[0].detail


def test_parse_error_reports_line():
    with pytest.raises(ParseError, match="line 2"):
        load_instance('{"schema": 1,\n "nodes": [}')


def test_unknown_key_rejected(tri_doc):
    tri_doc["extra"] = 1
    with pytest.raises(ParseError, match="extra"):
        load_instance(tri_doc)


def test_missing_schema_rejected(tri_doc):
    del tri_doc["schema"]
    with pytest.raises(ParseError, match="schema"):
        load_instance(tri_doc)


def test_field_path_in_parse_error(tri_doc):
    tri_doc["lines"][1]["r"] = "high"
    with pytest.raises(ParseError, match=r"lines\[1\]\.r"):
        load_instance(tri_doc)


def test_rental_defaults_to_fraction_of_capex(tri):
    assert tri.fleet.mhers[0].rental == pytest.approx(0.02 * 415000)


def test_priority_defaults_to_one(tri):
    assert tri.nodes[1].priority == 1.0


def test_round_trip(tri):
    again = load_instance(json.loads(serialize(tri)))
    assert again == tri


def test_round_trip_fourteen_nodes():
    inst = bundled_instance("ieee14")
    assert load_instance(json.loads(serialize(inst))) == inst


def test_validation_lists_every_failure(tri_doc):
    tri_doc["uncertainty"].update(sigma1=0.9, sigma2=0.7, k=5)
    with pytest.raises(ValidationError) as info:
        load_instance(tri_doc)
    names = {c.name for c in info.value.report.failures}
    assert {"sigma order", "k range"} <= names


def test_ratio_full_and_empty(tri):
    assert restoration_ratio(tri, tri.pd) == 1.0
    assert restoration_ratio(tri, np.zeros_like(tri.pd)) == 0.0


def test_ratio_weighted_arithmetic():
    inst = load_instance(two_node_doc())
    pl = np.array([[0.0], [100.0], [0.0]])
    assert restoration_ratio(inst, pl) == pytest.approx(2 / 3, abs=1e-15)


def test_ratio_zero_demand_undefined():
    inst = instance_from_dict(two_node_doc(demand=(0.0, 0.0)))
    with pytest.raises(ValueError, match="undefined ratio"):
        restoration_ratio(inst, np.zeros((3, 1)))
