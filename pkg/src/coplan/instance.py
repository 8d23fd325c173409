"""Problem data model, instance documents and validation.

An instance is a frozen dataclass. Derived index structures are computed
lazily and cached on the object; they never take part in equality.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

SCHEMA_VERSION = 1

SUBSTATION = "substation"
EH = "eh"
LOAD = "load"
NODE_KINDS = (SUBSTATION, EH, LOAD)

BACKENDS = ("highs", "reference")


class InstanceError(ValueError):
    """Base class for instance loading problems."""


class ParseError(InstanceError):
    """The document is not valid JSON or does not follow the schema."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.line = line
        where = f"line {line}" if line is not None else path or "<root>"
        super().__init__(f"{where}: {message}")


class ValidationError(InstanceError):
    """The document parsed but violates one or more invariants."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        lines = [f"{c.name}: {c.detail}" for c in report.failures]
        super().__init__("instance validation failed:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    v_min: float
    v_max: float
    priority: float = 1.0
    p_max: float = 0.0  # substation import or stationary generator limit
    q_max: float = 0.0
    parking: int = 0


@dataclass(frozen=True)
class Line:
    id: str
    src: str
    dst: str
    r: float
    x: float
    p_max: float
    q_max: float
    switchable: bool = False
    tie: bool = False
    vulnerable: bool = False
    hardening_cost: float = 0.0


@dataclass(frozen=True)
class Mher:
    id: str
    h_max: float
    h_min: float
    p_max: float
    q_max: float
    efficiency: float
    travel_rate: float
    rental: float
    premium: bool = False
    capex: float | None = None


@dataclass(frozen=True)
class MherFleet:
    mhers: tuple[Mher, ...]
    conversion: float
    # travel[m][a][b]: periods for MHER m between EH positions a and b
    travel: tuple[tuple[tuple[int, ...], ...], ...]


@dataclass(frozen=True)
class NetworkInstance:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    fleet: MherFleet
    periods: int
    step_hours: float
    v_ref: float
    p_demand: tuple[tuple[float, ...], ...]  # node x period, kW
    q_demand: tuple[tuple[float, ...], ...]
    budget: float
    k: int
    sigma1: float
    sigma2: float
    resilience_target: float
    rental_fraction: float = 0.02
    big_m_voltage: float | None = None
    big_m_flow: float | None = None
    backend: str = "highs"
    name: str = ""
    cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    # -- derived structure -------------------------------------------------

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def line_index(self) -> dict[str, int]:
        return {ln.id: i for i, ln in enumerate(self.lines)}

    @cached_property
    def substations(self) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self.nodes) if n.kind == SUBSTATION)

    @cached_property
    def eh_nodes(self) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self.nodes) if n.kind == EH)

    @cached_property
    def load_nodes(self) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self.nodes) if n.kind == LOAD)

    @cached_property
    def eh_position(self) -> dict[int, int]:
        return {n: e for e, n in enumerate(self.eh_nodes)}

    @cached_property
    def vulnerable(self) -> tuple[int, ...]:
        return tuple(i for i, ln in enumerate(self.lines) if ln.vulnerable)

    @cached_property
    def switchable(self) -> tuple[int, ...]:
        return tuple(i for i, ln in enumerate(self.lines) if ln.switchable)

    @cached_property
    def endpoints(self) -> tuple[tuple[int, int], ...]:
        ix = self.node_index
        return tuple((ix[ln.src], ix[ln.dst]) for ln in self.lines)

    @cached_property
    def lines_in(self) -> tuple[tuple[int, ...], ...]:
        """Lines entering each node (the parent set of the node)."""
        acc: list[list[int]] = [[] for _ in self.nodes]
        for l, (_, j) in enumerate(self.endpoints):
            acc[j].append(l)
        return tuple(tuple(a) for a in acc)

    @cached_property
    def lines_out(self) -> tuple[tuple[int, ...], ...]:
        acc: list[list[int]] = [[] for _ in self.nodes]
        for l, (i, _) in enumerate(self.endpoints):
            acc[i].append(l)
        return tuple(tuple(a) for a in acc)

    @property
    def n_mhers(self) -> int:
        return len(self.fleet.mhers)

    @cached_property
    def pd(self) -> np.ndarray:
        a = np.asarray(self.p_demand, dtype=float).reshape(len(self.nodes), self.periods)
        a.setflags(write=False)
        return a

    @cached_property
    def qd(self) -> np.ndarray:
        a = np.asarray(self.q_demand, dtype=float).reshape(len(self.nodes), self.periods)
        a.setflags(write=False)
        return a

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.array([n.priority for n in self.nodes], dtype=float)
        w.setflags(write=False)
        return w

    @cached_property
    def weighted_demand(self) -> float:
        return float(np.sum(self.weights[:, None] * self.pd))

    @cached_property
    def voltage_big_m(self) -> float:
        if self.big_m_voltage is not None:
            return self.big_m_voltage
        vmax = max(n.v_max for n in self.nodes)
        vmin = min(n.v_min for n in self.nodes)
        drop = max((ln.r * ln.p_max + ln.x * ln.q_max) / self.v_ref for ln in self.lines)
        return (vmax - vmin) + drop

    @cached_property
    def flow_big_m(self) -> float:
        return self.big_m_flow if self.big_m_flow is not None else float(len(self.nodes))

    def hardening_costs(self) -> np.ndarray:
        return np.array([self.lines[l].hardening_cost for l in self.vulnerable])

    def rental_costs(self) -> np.ndarray:
        return np.array([m.rental for m in self.fleet.mhers])

    def replace(self, **changes: Any) -> "NetworkInstance":
        """Copy with some fields changed; the derived cache is not carried over."""
        data = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "cache"}
        data.update(changes)
        return NetworkInstance(**data)


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), "" if passed else detail))

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    @property
    def ok(self) -> bool:
        return not self.failures


def _forest_check(inst: NetworkInstance) -> tuple[bool, str]:
    """Non-tie lines must form a forest with one substation per tree."""
    n = len(inst.nodes)
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    base = [l for l, ln in enumerate(inst.lines) if not ln.tie]
    need = n - len(inst.substations)
    if len(base) != need:
        return False, f"{len(base)} non-tie lines, expected {need}"
    for l in base:
        i, j = inst.endpoints[l]
        ri, rj = find(i), find(j)
        if ri == rj:
            return False, f"non-tie line {inst.lines[l].id} closes a loop"
        parent[ri] = rj
    roots: dict[int, int] = {}
    for s in inst.substations:
        roots[find(s)] = roots.get(find(s), 0) + 1
    stray = [inst.nodes[i].id for i in range(n) if find(i) not in roots]
    if stray:
        return False, f"nodes not fed by a substation: {stray}"
    return True, ""


def validate(inst: NetworkInstance) -> ValidationReport:
    """Check every invariant; failures carry the offending ids."""
    rep = ValidationReport()
    ids = [n.id for n in inst.nodes]
    rep.add("unique node ids", len(set(ids)) == len(ids), "duplicate node id")
    lids = [ln.id for ln in inst.lines]
    rep.add("unique line ids", len(set(lids)) == len(lids), "duplicate line id")
    bad_kind = [n.id for n in inst.nodes if n.kind not in NODE_KINDS]
    rep.add("node kinds", not bad_kind, f"unknown kind on {bad_kind}")
    rep.add("substation present", len(inst.substations) > 0, "no substation node")
    known = set(ids)
    dangling = [ln.id for ln in inst.lines if ln.src not in known or ln.dst not in known]
    rep.add("line endpoints declared", not dangling, f"undeclared endpoint on {dangling}")
    loops = [ln.id for ln in inst.lines if ln.src == ln.dst]
    rep.add("no self loops", not loops, f"self loop {loops}")
    if dangling or loops or len(set(ids)) != len(ids):
        return rep

    tie_vul = [ln.id for ln in inst.lines if ln.tie and ln.vulnerable]
    rep.add("tie lines invulnerable", not tie_vul,
            f"tie lines must be invulnerable (normally open): {tie_vul}")
    tie_fixed = [ln.id for ln in inst.lines if ln.tie and not ln.switchable]
    rep.add("tie lines switchable", not tie_fixed, f"tie line without switch: {tie_fixed}")
    bad_rx = [ln.id for ln in inst.lines if not (ln.r >= 0 and ln.x >= 0)]
    rep.add("line impedance", not bad_rx, f"R, X must be >= 0 on {bad_rx}")
    bad_cap = [ln.id for ln in inst.lines if not (ln.p_max > 0 and ln.q_max > 0)]
    rep.add("line capacity", not bad_cap, f"capacities must be > 0 on {bad_cap}")
    ok, detail = _forest_check(inst)
    rep.add("radial base topology", ok, detail)

    rep.add("sigma order", 0 <= inst.sigma1 <= inst.sigma2 <= 1,
            f"σ₁ ≤ σ₂ violated (σ₁={inst.sigma1}, σ₂={inst.sigma2})"
            if inst.sigma1 > inst.sigma2 else f"σ out of [0,1] ({inst.sigma1}, {inst.sigma2})")
    nv = len(inst.vulnerable)
    rep.add("k range", inst.k >= 0 and inst.k <= nv,
            f"k exceeds vulnerable line count ({inst.k} > {nv})" if inst.k > nv else "k must be >= 0")
    rep.add("resilience target", 0 <= inst.resilience_target <= 1,
            f"resilience target {inst.resilience_target} outside [0,1]")
    rep.add("periods", inst.periods >= 1 and inst.step_hours > 0, "need >= 1 period and step > 0")

    pd, qd = inst.pd, inst.qd
    neg = [inst.nodes[i].id for i in range(len(inst.nodes)) if np.any(pd[i] < 0)]
    rep.add("demand nonnegative", not neg, f"negative P demand on {neg}")
    badq = [inst.nodes[i].id for i in range(len(inst.nodes))
            if np.any(~np.isfinite(qd[i])) or np.any((pd[i] == 0) & (qd[i] != 0))]
    rep.add("reactive demand", not badq, f"Q demand without P demand (undefined ratio) on {badq}")
    badw = [n.id for n in inst.nodes if not n.priority >= 0]
    rep.add("priority weights", not badw, f"negative weight on {badw}")
    rep.add("weighted demand positive", inst.weighted_demand > 0, "undefined ratio: zero weighted demand")

    badv = [n.id for n in inst.nodes if not (n.v_min <= inst.v_ref <= n.v_max)]
    rep.add("reference voltage inside bounds", not badv, f"V0 outside bounds at {badv}")
    badp = [n.id for n in inst.nodes if n.p_max < 0 or n.q_max < 0 or n.parking < 0]
    rep.add("node limits", not badp, f"negative limit on {badp}")

    fl = inst.fleet
    rep.add("conversion factor", fl.conversion > 0, "conversion must be > 0")
    mids = [m.id for m in fl.mhers]
    rep.add("unique mher ids", len(set(mids)) == len(mids), "duplicate MHER id")
    badh = [m.id for m in fl.mhers if not (0 <= m.h_min <= m.h_max and m.h_max > 0)]
    rep.add("hydrogen bounds", not badh, f"need 0 <= H_min <= H_max on {badh}")
    bade = [m.id for m in fl.mhers if not (0 < m.efficiency <= 1)]
    rep.add("efficiency", not bade, f"efficiency outside (0,1] on {bade}")
    badm = [m.id for m in fl.mhers if m.p_max <= 0 or m.q_max < 0 or m.travel_rate < 0 or m.rental < 0]
    rep.add("mher limits", not badm, f"bad power/travel/rental data on {badm}")
    # a rented MHER must be able to sit out every period at the lowest admissible start
    short = [m.id for m in fl.mhers
             if inst.sigma1 * m.h_max - m.travel_rate * inst.periods < m.h_min - 1e-9]
    rep.add("hydrogen reserve", not short,
            f"σ₁·H_max − burn·|T| below H_min for {short} (recourse could be infeasible)")
    ne = len(inst.eh_nodes)
    shape_ok = len(fl.travel) == len(fl.mhers) and all(
        len(tm) == ne and all(len(row) == ne for row in tm) for tm in fl.travel)
    rep.add("travel matrix shape", shape_ok, "travel matrix must be |fleet| x |EH| x |EH|")
    if shape_ok:
        badt = [fl.mhers[m].id for m in range(len(fl.mhers)) for a in range(ne) for b in range(ne)
                if a != b and fl.travel[m][a][b] < 1]
        rep.add("travel times", not badt, f"travel time < 1 between distinct nodes for {sorted(set(badt))}")
    badc = [inst.lines[l].id for l in inst.vulnerable if inst.lines[l].hardening_cost < 0]
    rep.add("hardening costs", not badc, f"negative hardening cost on {badc}")
    rep.add("budget", inst.budget >= 0, "budget must be >= 0")
    for label, val in (("voltage", inst.big_m_voltage), ("flow", inst.big_m_flow)):
        rep.add(f"big-M {label}", val is None or val > 0, f"big-M {label} must be positive")
    rep.add("backend", inst.backend in BACKENDS, f"unknown backend {inst.backend!r}")
    return rep


def restoration_ratio(inst: NetworkInstance, pl: np.ndarray) -> float:
    """Weighted served load over weighted demand across all periods."""
    pl = np.asarray(pl, dtype=float)
    if pl.shape != inst.pd.shape:
        raise ValueError(f"served-load shape {pl.shape} != {inst.pd.shape}")
    den = inst.weighted_demand
    if den <= 0:
        raise ValueError("undefined ratio: zero total weighted demand")
    return float(np.sum(inst.weights[:, None] * pl) / den)


# -- document parsing ---------------------------------------------------------


class _Doc:
    """Typed access into a JSON object with path-aware errors."""

    def __init__(self, obj: Any, path: str):
        if not isinstance(obj, dict):
            raise ParseError(path, "expected an object")
        self.obj = obj
        self.path = path
        self.used: set[str] = set()

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.obj and self.obj[key] is not None

    def raw(self, key: str, default: Any = ...) -> Any:
        self.used.add(key)
        if key not in self.obj:
            if default is ...:
                raise ParseError(self._p(key), "missing required field")
            return default
        return self.obj[key]

    def num(self, key: str, default: Any = ..., allow_none: bool = False) -> float | None:
        v = self.raw(key, default)
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(self._p(key), f"expected a number, got {type(v).__name__}")
        return float(v)

    def int(self, key: str, default: Any = ...) -> int:
        v = self.raw(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            if isinstance(v, float) and v.is_integer():
                return int(v)
            raise ParseError(self._p(key), "expected an integer")
        return v

    def str(self, key: str, default: Any = ...) -> str:
        v = self.raw(key, default)
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return str(v)
        if not isinstance(v, str):
            raise ParseError(self._p(key), "expected a string")
        return v

    def bool(self, key: str, default: Any = ...) -> bool:
        v = self.raw(key, default)
        if not isinstance(v, bool):
            raise ParseError(self._p(key), "expected true/false")
        return v

    def sub(self, key: str, default: Any = ...) -> "_Doc":
        v = self.raw(key, default)
        return _Doc(v, self._p(key))

    def list(self, key: str, default: Any = ...) -> list:
        v = self.raw(key, default)
        if not isinstance(v, list):
            raise ParseError(self._p(key), "expected a list")
        return v

    def done(self) -> None:
        extra = sorted(set(self.obj) - self.used)
        if extra:
            raise ParseError(self._p(extra[0]), "unknown key")


def _numbers(v: Any, path: str, n: int) -> tuple[float, ...]:
    if not isinstance(v, list) or len(v) != n:
        raise ParseError(path, f"expected a list of {n} numbers")
    for i, a in enumerate(v):
        if isinstance(a, bool) or not isinstance(a, (int, float)):
            raise ParseError(f"{path}[{i}]", "expected a number")
    return tuple(float(a) for a in v)


def instance_from_dict(data: Any, name: str = "") -> NetworkInstance:
    """Build an instance from a parsed document without validating it."""
    root = _Doc(data, "")
    if root.raw("schema") != SCHEMA_VERSION:
        raise ParseError("schema", f"unsupported schema version (expected {SCHEMA_VERSION})")

    nd = root.sub("nodes")
    v_ref = nd.num("v_ref", 1.0)
    nodes = []
    for i, item in enumerate(nd.list("items")):
        d = _Doc(item, f"nodes.items[{i}]")
        kind = d.str("kind")
        p_max = q_max = 0.0
        if kind == SUBSTATION:
            s = d.sub("substation")
            p_max, q_max = s.num("p_max"), s.num("q_max")
            s.done()
        elif kind == EH and d.has("generator"):
            g = d.sub("generator")
            p_max, q_max = g.num("p_max"), g.num("q_max")
            g.done()
        nodes.append(Node(
            id=d.str("id"), kind=kind, v_min=d.num("v_min"), v_max=d.num("v_max"),
            priority=d.num("priority", 1.0), p_max=p_max, q_max=q_max,
            parking=d.int("parking", 1 if kind == EH else 0)))
        d.raw("generator", None)
        d.done()
    nd.done()
    node_ids = {n.id for n in nodes}

    costs = root.sub("costs")
    hard = costs.sub("hardening", {})
    hard_costs: dict[str, float] = {}
    for key in hard.obj:
        hard_costs[key] = hard.num(key)
    lines = []
    for i, item in enumerate(root.list("lines")):
        d = _Doc(item, f"lines[{i}]")
        lid = d.str("id")
        vul = d.bool("vulnerable", False)
        if vul and lid not in hard_costs:
            raise ParseError(f"costs.hardening.{lid}", "missing hardening cost for vulnerable line")
        lines.append(Line(
            id=lid, src=d.str("from"), dst=d.str("to"), r=d.num("r"), x=d.num("x"),
            p_max=d.num("p_max"), q_max=d.num("q_max"), switchable=d.bool("switchable", False),
            tie=d.bool("tie", False), vulnerable=vul, hardening_cost=hard_costs.get(lid, 0.0)))
        d.done()
    unknown = sorted(set(hard_costs) - {ln.id for ln in lines})
    if unknown:
        raise ParseError(f"costs.hardening.{unknown[0]}", "unknown line")
    rental_fraction = costs.num("rental_fraction", 0.02)
    budget = costs.num("budget", None, allow_none=True)
    budget = math.inf if budget is None else budget
    rentals = costs.sub("rental", {})
    rental_override = {key: rentals.num(key) for key in rentals.obj}
    costs.done()

    md = root.sub("mhers")
    conversion = md.num("conversion")
    mhers = []
    for i, item in enumerate(md.list("fleet")):
        d = _Doc(item, f"mhers.fleet[{i}]")
        mid = d.str("id")
        capex = d.num("capex", None, allow_none=True)
        rental = d.num("rental", None, allow_none=True)
        if mid in rental_override:
            rental = rental_override[mid]
        if rental is None:
            if capex is None:
                raise ParseError(f"mhers.fleet[{i}]", "need rental or capex")
            rental = rental_fraction * capex
        mhers.append(Mher(
            id=mid, h_max=d.num("h_max"), h_min=d.num("h_min", 0.0), p_max=d.num("p_max"),
            q_max=d.num("q_max"), efficiency=d.num("efficiency"),
            travel_rate=d.num("travel_rate"), rental=rental,
            premium=d.bool("premium", False), capex=capex))
        d.done()
    mids = [m.id for m in mhers]
    unknown = sorted(set(rental_override) - set(mids))
    if unknown:
        raise ParseError(f"costs.rental.{unknown[0]}", "unknown MHER")

    eh_ids = [n.id for n in nodes if n.kind == EH]
    eh_pos = {nid: e for e, nid in enumerate(eh_ids)}
    ne = len(eh_ids)
    tr = [[[0 if a == b else -1 for b in range(ne)] for a in range(ne)] for _ in mhers]
    for i, item in enumerate(md.list("travel_times", [])):
        d = _Doc(item, f"mhers.travel_times[{i}]")
        who = d.str("mher", "*")
        a, b = d.str("from"), d.str("to")
        per = d.int("periods")
        sym = d.bool("symmetric", True)
        d.done()
        for end in (a, b):
            if end not in eh_pos:
                raise ParseError(f"mhers.travel_times[{i}]", f"{end!r} is not an EH node")
        targets = range(len(mhers)) if who == "*" else [mids.index(who)] if who in mids else None
        if targets is None:
            raise ParseError(f"mhers.travel_times[{i}].mher", f"unknown MHER {who!r}")
        for m in targets:
            tr[m][eh_pos[a]][eh_pos[b]] = per
            if sym:
                tr[m][eh_pos[b]][eh_pos[a]] = per
    for m in range(len(mhers)):
        for a in range(ne):
            for b in range(ne):
                if tr[m][a][b] < 0:
                    raise ParseError("mhers.travel_times",
                                     f"no travel time for {mids[m]} between {eh_ids[a]} and {eh_ids[b]}")
    md.done()
    fleet = MherFleet(tuple(mhers), conversion, tuple(tuple(tuple(r) for r in tm) for tm in tr))

    ld = root.sub("loads")
    periods = ld.int("periods")
    step = ld.num("step_hours", 1.0)
    prof = ld.sub("profiles", {})
    p_dem = {nid: (0.0,) * periods for nid in node_ids}
    q_dem = dict(p_dem)
    for nid in list(prof.obj):
        if nid not in node_ids:
            raise ParseError(f"loads.profiles.{nid}", "unknown node")
        d = prof.sub(nid)
        p_dem[nid] = _numbers(d.raw("p"), f"loads.profiles.{nid}.p", periods)
        q_dem[nid] = _numbers(d.raw("q"), f"loads.profiles.{nid}.q", periods)
        d.done()
    prof.done()
    ld.done()

    un = root.sub("uncertainty")
    k = un.int("k")
    s1, s2 = un.num("sigma1"), un.num("sigma2")
    un.done()

    so = root.sub("solver")
    target = so.num("resilience_target")
    bm = so.sub("big_m", {})
    bmv = bm.num("voltage", None, allow_none=True)
    bmf = bm.num("flow", None, allow_none=True)
    bm.done()
    backend = so.str("backend", "highs")
    so.done()
    root.raw("name", "")
    root.done()

    return NetworkInstance(
        nodes=tuple(nodes), lines=tuple(lines), fleet=fleet, periods=periods, step_hours=step,
        v_ref=v_ref, p_demand=tuple(p_dem[n.id] for n in nodes),
        q_demand=tuple(q_dem[n.id] for n in nodes), budget=budget, k=k, sigma1=s1, sigma2=s2,
        resilience_target=target, rental_fraction=rental_fraction, big_m_voltage=bmv,
        big_m_flow=bmf, backend=backend, name=str(data.get("name", "") or name))


def load_instance(source: str | Path | dict, check: bool = True) -> NetworkInstance:
    """Parse an instance from a path, a JSON string or an already-parsed dict."""
    name = ""
    if isinstance(source, dict):
        data = source
    else:
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            path = Path(source)
            name = path.stem
            text = path.read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError("", exc.msg, line=exc.lineno) from None
    inst = instance_from_dict(data, name=name)
    if check:
        rep = validate(inst)
        if not rep.ok:
            raise ValidationError(rep)
    return inst


def bundled_instance(name: str) -> NetworkInstance:
    """Load one of the instance documents shipped with the package (``tri``, ``ieee14``)."""
    ref = resources.files("coplan") / "data" / f"{name}.json"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled instance named {name!r}")
    inst = load_instance(json.loads(ref.read_text()))
    return inst.replace(name=inst.name or name)


def instance_to_dict(inst: NetworkInstance) -> dict:
    """Inverse of instance_from_dict."""
    items = []
    for n in inst.nodes:
        item: dict[str, Any] = {"id": n.id, "kind": n.kind, "v_min": n.v_min, "v_max": n.v_max,
                                "priority": n.priority}
        if n.kind == SUBSTATION:
            item["substation"] = {"p_max": n.p_max, "q_max": n.q_max}
        if n.kind == EH:
            item["generator"] = {"p_max": n.p_max, "q_max": n.q_max}
        item["parking"] = n.parking
        items.append(item)
    lines = [{"id": ln.id, "from": ln.src, "to": ln.dst, "r": ln.r, "x": ln.x, "p_max": ln.p_max,
              "q_max": ln.q_max, "switchable": ln.switchable, "tie": ln.tie,
              "vulnerable": ln.vulnerable} for ln in inst.lines]
    fleet = []
    for m in inst.fleet.mhers:
        fleet.append({"id": m.id, "h_max": m.h_max, "h_min": m.h_min, "p_max": m.p_max,
                      "q_max": m.q_max, "efficiency": m.efficiency, "travel_rate": m.travel_rate,
                      "rental": m.rental, "premium": m.premium, "capex": m.capex})
    eh_ids = [inst.nodes[j].id for j in inst.eh_nodes]
    travel = []
    for mi, tm in enumerate(inst.fleet.travel):
        for a, row in enumerate(tm):
            for b, per in enumerate(row):
                if a != b:
                    travel.append({"mher": inst.fleet.mhers[mi].id, "from": eh_ids[a], "to": eh_ids[b],
                                   "periods": per, "symmetric": False})
    profiles = {n.id: {"p": list(inst.p_demand[i]), "q": list(inst.q_demand[i])}
                for i, n in enumerate(inst.nodes) if any(inst.p_demand[i]) or any(inst.q_demand[i])}
    return {
        "schema": SCHEMA_VERSION,
        "name": inst.name,
        "nodes": {"v_ref": inst.v_ref, "items": items},
        "lines": lines,
        "mhers": {"conversion": inst.fleet.conversion, "fleet": fleet, "travel_times": travel},
        "loads": {"periods": inst.periods, "step_hours": inst.step_hours, "profiles": profiles},
        "costs": {"hardening": {inst.lines[l].id: inst.lines[l].hardening_cost for l in inst.vulnerable},
                  "rental_fraction": inst.rental_fraction,
                  "budget": None if math.isinf(inst.budget) else inst.budget},
        "uncertainty": {"k": inst.k, "sigma1": inst.sigma1, "sigma2": inst.sigma2},
        "solver": {"resilience_target": inst.resilience_target,
                   "big_m": {"voltage": inst.big_m_voltage, "flow": inst.big_m_flow},
                   "backend": inst.backend},
    }


def serialize(inst: NetworkInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1)
