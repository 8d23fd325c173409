"""Seeded instance generators for test suites and trend studies."""

from __future__ import annotations

import numpy as np

from coplan.instance import NetworkInstance, instance_from_dict, validate, ValidationError

# MHER types: (h_max kg, p_max kW, q_max kVar, capex $)
MHER_TYPES = ((30.0, 200.0, 250.0, 415_000.0), (45.0, 200.0, 300.0, 422_500.0),
              (60.0, 300.0, 400.0, 630_000.0))
CONVERSION = 38.9
EFFICIENCY = 0.52
HARDENING_PER_KM = 120_000.0


def _finish(doc: dict) -> NetworkInstance:
    inst = instance_from_dict(doc)
    rep = validate(inst)
    if not rep.ok:
        raise ValidationError(rep)
    return inst


def random_instance(seed: int, n_nodes: tuple[int, int] = (5, 8), n_vulnerable: int = 6,
                    k: int | None = None, n_mhers: int = 2, periods: int = 2, n_eh: int = 2,
                    n_ties: int = 1, budget: float | None = None, target: float = 0.8,
                    parking: int = 1) -> NetworkInstance:
    """Random radial feeder with ties, EH nodes and a small fleet.

    Sizes are upper bounds; the RNG picks within them so that suites mix
    shapes. Damage matters because loads hang off vulnerable branches while
    ties and EH nodes give partial backup.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_nodes[0], n_nodes[1] + 1))
    ids = [str(i + 1) for i in range(n)]
    parent = [None] + [int(rng.integers(max(0, i - 3), i)) for i in range(1, n)]
    tree = [(parent[i], i) for i in range(1, n)]
    others = list(range(1, n))
    n_eh = min(n_eh, len(others) - 1)
    eh = set(int(a) for a in rng.choice(others, size=n_eh, replace=False))
    nodes = []
    for i in range(n):
        item = {"id": ids[i], "v_min": 0.95, "v_max": 1.05,
                "priority": float(rng.choice([1.0, 1.0, 2.0, 3.0]))}
        if i == 0:
            item.update(kind="substation", substation={"p_max": 2000.0, "q_max": 1500.0})
        elif i in eh:
            sg = float(rng.choice([0.0, 0.0, 40.0, 80.0]))
            item.update(kind="eh", generator={"p_max": sg, "q_max": sg * 0.75}, parking=parking)
        else:
            item["kind"] = "load"
        nodes.append(item)
    lines = []
    vul = set(int(a) for a in rng.choice(len(tree), size=min(n_vulnerable, len(tree)), replace=False))
    hardening = {}
    for a, (i, j) in enumerate(tree):
        lid = f"{ids[i]}-{ids[j]}"
        sw = bool(rng.random() < 0.7)
        lines.append({"id": lid, "from": ids[i], "to": ids[j], "r": float(rng.uniform(0.5e-4, 1.5e-4)),
                      "x": float(rng.uniform(0.3e-4, 1e-4)), "p_max": 1500.0, "q_max": 1200.0,
                      "switchable": sw, "tie": False, "vulnerable": a in vul})
        if a in vul:
            km = float(rng.integers(3, 16)) / 10.0
            hardening[lid] = round(HARDENING_PER_KM * km)
    existing = {frozenset(e) for e in tree}
    ties = 0
    for _ in range(50):
        if ties >= n_ties:
            break
        i, j = (int(a) for a in rng.choice(n, size=2, replace=False))
        if frozenset((i, j)) in existing:
            continue
        existing.add(frozenset((i, j)))
        lines.append({"id": f"{ids[i]}-{ids[j]}", "from": ids[i], "to": ids[j],
                      "r": float(rng.uniform(0.5e-4, 1.5e-4)), "x": float(rng.uniform(0.3e-4, 1e-4)),
                      "p_max": float(rng.choice([150.0, 300.0])), "q_max": 200.0,
                      "switchable": True, "tie": True, "vulnerable": False})
        ties += 1
    profiles = {}
    for i in range(1, n):
        if i in eh and rng.random() < 0.5:
            continue
        base = float(rng.integers(4, 16)) * 10.0
        shape = 1.0 + 0.1 * rng.integers(-2, 3, size=periods)
        p = [round(base * s, 1) for s in shape]
        profiles[ids[i]] = {"p": p, "q": [round(0.3 * a, 1) for a in p]}
    fleet = []
    for m in range(n_mhers):
        h, pm, qm, capex = MHER_TYPES[int(rng.integers(0, 3))]
        fleet.append({"id": f"M{m + 1}", "h_max": h, "h_min": round(0.1 * h, 1), "p_max": pm, "q_max": qm,
                      "efficiency": EFFICIENCY, "travel_rate": 1.0, "capex": capex,
                      "premium": bool(rng.random() < 0.5)})
    eh_ids = [ids[i] for i in sorted(eh)]
    travel = []
    for a in range(len(eh_ids)):
        for b in range(a + 1, len(eh_ids)):
            travel.append({"mher": "*", "from": eh_ids[a], "to": eh_ids[b],
                           "periods": int(rng.integers(1, 3)), "symmetric": True})
    nv = len(vul)
    if k is None:
        k = int(rng.integers(1, min(3, nv) + 1)) if nv else 0
    doc = {
        "schema": 1, "name": f"random-{seed}",
        "nodes": {"v_ref": 1.0, "items": nodes},
        "lines": lines,
        "mhers": {"conversion": CONVERSION, "fleet": fleet, "travel_times": travel},
        "loads": {"periods": periods, "step_hours": 1.0, "profiles": profiles},
        "costs": {"hardening": hardening, "rental_fraction": 0.02, "budget": budget},
        "uncertainty": {"k": min(k, nv), "sigma1": 0.7, "sigma2": 0.9},
        "solver": {"resilience_target": target, "big_m": {"voltage": None, "flow": None}, "backend": "highs"},
    }
    return _finish(doc)


IEEE14_LINES = ((1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (2, 9), (9, 10), (10, 11),
                (4, 12), (12, 13), (13, 14))
IEEE14_TIES = ((5, 11), (8, 14))


def ieee14_shaped(seed: int = 14, periods: int = 3, k: int = 5, target: float = 0.9,
                  fleet_types: tuple[int, ...] = (0, 1, 2, 0, 1, 2), premium_from: int = 3,
                  budget: float | None = None, vulnerable: tuple[str, ...] | None = None) -> NetworkInstance:
    """14-node feeder with the published line list, tie switches, 6 EH nodes and 2 SGs.

    ``vulnerable`` restricts damage and hardening to the listed line ids;
    by default every non-tie line is vulnerable.

    Line lengths, loads and travel times are not published, so they are drawn
    from the seed. Node 14 carries the second stationary generator as a
    generator-only source (EH kind with no parking).
    """
    rng = np.random.default_rng(seed)
    eh = {4, 6, 7, 9, 11, 12}
    sg = {6: 200.0, 14: 250.0}
    nodes = []
    for i in range(1, 15):
        item = {"id": str(i), "v_min": 0.95, "v_max": 1.05, "priority": float(rng.choice([1.0, 1.0, 2.0]))}
        if i == 1:
            item.update(kind="substation", substation={"p_max": 3000.0, "q_max": 2000.0})
        elif i in eh or i in sg:
            p = sg.get(i, 0.0)
            item.update(kind="eh", generator={"p_max": p, "q_max": 0.75 * p}, parking=2 if i in eh else 0)
        else:
            item["kind"] = "load"
        nodes.append(item)
    lines, hardening = [], {}
    for i, j in IEEE14_LINES:
        lid = f"{i}-{j}"
        vul = vulnerable is None or lid in vulnerable
        lines.append({"id": lid, "from": str(i), "to": str(j), "r": float(rng.uniform(0.3e-5, 1e-5)),
                      "x": float(rng.uniform(0.2e-5, 0.6e-5)), "p_max": 3000.0, "q_max": 2000.0,
                      "switchable": True, "tie": False, "vulnerable": vul})
        cost = round(HARDENING_PER_KM * float(rng.integers(5, 21)) / 100.0)
        if vul:
            hardening[lid] = cost
    for i, j in IEEE14_TIES:
        lines.append({"id": f"{i}-{j}", "from": str(i), "to": str(j), "r": 1e-5, "x": 0.5e-5,
                      "p_max": 800.0, "q_max": 600.0, "switchable": True, "tie": True, "vulnerable": False})
    profiles = {}
    for i in range(2, 15):
        if i == 14:
            continue
        base = float(rng.integers(6, 19)) * 10.0
        shape = 1.0 + 0.05 * rng.integers(-2, 3, size=periods)
        p = [round(base * s, 1) for s in shape]
        profiles[str(i)] = {"p": p, "q": [round(0.3 * a, 1) for a in p]}
    fleet = []
    for m, ty in enumerate(fleet_types):
        h, pm, qm, capex = MHER_TYPES[ty]
        premium = m >= premium_from
        fleet.append({"id": f"M{m + 1}", "h_max": h, "h_min": round(0.1 * h, 1), "p_max": pm, "q_max": qm,
                      "efficiency": EFFICIENCY, "travel_rate": 1.0,
                      "rental": round(0.02 * capex * (1.2 if premium else 1.0), 2), "premium": premium})
    eh_ids = sorted(eh | set(sg))
    travel = []
    for a in range(len(eh_ids)):
        for b in range(a + 1, len(eh_ids)):
            travel.append({"mher": "*", "from": str(eh_ids[a]), "to": str(eh_ids[b]),
                           "periods": int(rng.integers(1, 3)), "symmetric": True})
    doc = {
        "schema": 1, "name": f"ieee14-shaped-{seed}",
        "nodes": {"v_ref": 1.0, "items": nodes},
        "lines": lines,
        "mhers": {"conversion": CONVERSION, "fleet": fleet, "travel_times": travel},
        "loads": {"periods": periods, "step_hours": 1.0, "profiles": profiles},
        "costs": {"hardening": hardening, "rental_fraction": 0.02, "budget": budget},
        "uncertainty": {"k": k, "sigma1": 0.7, "sigma2": 0.9},
        "solver": {"resilience_target": target, "big_m": {"voltage": None, "flow": None}, "backend": "highs"},
    }
    return _finish(doc)
