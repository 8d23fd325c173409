"""Decision-dependent uncertainty set and the optimality blocks built on it.

The set couples damage indicators u to hardening x (u >= x, at most k
damaged lines) and initial hydrogen H0 to rental chi (per-MHER floor and a
premium aggregate floor). The OU block encodes, through KKT conditions, the
scenarios that minimize the worst dual bound of a pair set; OU' pins the
damage pattern of the last worst case.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from coplan.decisions import FirstStageDecision, Scenario, VUPairSet
from coplan.formulation import RecourseTemplate, chi_name, h0_name, nm, u_name, x_name
from coplan.instance import NetworkInstance
from coplan.model import BINARY, CONTINUOUS, EQ, GE, LE, ConstraintBlock, ModelError

DDU = "ddu"


class EnumerationCapError(RuntimeError):
    def __init__(self, what: str, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"{what}: {size} exceeds cap {cap}")


# -- the polytope -----------------------------------------------------------------


@dataclass
class LinearRow:
    """c^T w + e^T ext >= d over scenario vars w and external vars ext."""

    w: dict[str, float]
    ext: dict[str, float]
    d: float
    name: str


def ddu_rows(inst: NetworkInstance, tag: str = "", u_names: list[str] | None = None,
             h0_names: list[str] | None = None) -> list[LinearRow]:
    """Rows of U(x, z) in >= form with x and chi kept symbolic."""
    un = u_names or [u_name(l, tag) for l in inst.vulnerable]
    hn = h0_names or [h0_name(m, tag) for m in range(inst.n_mhers)]
    rows = [LinearRow({u: 1.0 for u in un}, {}, float(len(un) - inst.k), "card" + tag)]
    for a, l in enumerate(inst.vulnerable):
        rows.append(LinearRow({un[a]: 1.0}, {x_name(l): -1.0}, 0.0, nm("harden", l) + tag))
        rows.append(LinearRow({un[a]: -1.0}, {}, -1.0, nm("u_ub", l) + tag))
    prem_w, prem_e = {}, {}
    for m, mh in enumerate(inst.fleet.mhers):
        rows.append(LinearRow({hn[m]: 1.0}, {chi_name(m): -inst.sigma1 * mh.h_max}, 0.0, nm("h0_lo", m) + tag))
        rows.append(LinearRow({hn[m]: -1.0}, {chi_name(m): mh.h_max}, 0.0, nm("h0_hi", m) + tag))
        if mh.premium:
            prem_w[hn[m]] = 1.0
            prem_e[chi_name(m)] = -inst.sigma2 * mh.h_max
    if prem_w:
        rows.append(LinearRow(prem_w, prem_e, 0.0, "premium" + tag))
    return rows


def build_ddu_polytope(inst: NetworkInstance, x: tuple[int, ...] | None, z: FirstStageDecision | None,
                       relaxed: bool = False, tag: str = "",
                       enclosing: ConstraintBlock | None = None) -> ConstraintBlock:
    """U(x, z) as a block; x/z given as None are symbolic and need an enclosing model."""
    if (x is None or z is None) and enclosing is None:
        raise ModelError("symbolic x/z need an enclosing model")
    blk = ConstraintBlock(f"ddu{tag}")
    for l in inst.vulnerable:
        blk.add_var(u_name(l, tag), CONTINUOUS if relaxed else BINARY, 0.0, 1.0)
    for m, mh in enumerate(inst.fleet.mhers):
        blk.add_var(h0_name(m, tag), CONTINUOUS, 0.0, mh.h_max)
    fixed: dict[str, float] = {}
    if x is not None:
        fixed.update({x_name(l): float(v) for l, v in zip(inst.vulnerable, x)})
    if z is not None:
        fixed.update({chi_name(m): float(c) for m, c in enumerate(z.chi)})
    for r in ddu_rows(inst, tag):
        coeffs = dict(r.w)
        rhs = r.d
        for k, c in r.ext.items():
            if k in fixed:
                rhs -= c * fixed[k]
            else:
                coeffs[k] = coeffs.get(k, 0.0) + c
        blk.add_row(coeffs, GE, rhs, name=r.name, group=DDU)
    if enclosing is not None:
        enclosing.include(blk)
    return blk


# -- enumeration --------------------------------------------------------------------


def u_patterns(inst: NetworkInstance, x: tuple[int, ...], cap: int = 20) -> list[tuple[int, ...]]:
    """Binary u with at most k zeros, all on unhardened lines; fewest zeros first."""
    nv = len(inst.vulnerable)
    if nv > cap:
        raise EnumerationCapError("vulnerable lines", nv, cap)
    free = [a for a in range(nv) if not x[a]]
    out = []
    for nz in range(0, min(inst.k, len(free)) + 1):
        for zeros in itertools.combinations(free, nz):
            u = [1] * nv
            for a in zeros:
                u[a] = 0
            out.append(tuple(u))
    return out


def h0_vertices(inst: NetworkInstance, chi: tuple[int, ...], fleet_cap: int = 8) -> list[tuple[float, ...]]:
    """Vertices of {sigma1 chi H <= H0 <= chi H, premium sum floor}.

    Each vertex has every coordinate at a bound except possibly one premium
    coordinate, which then makes the premium row tight.
    """
    M = inst.n_mhers
    if M > fleet_cap:
        raise EnumerationCapError("fleet size", M, fleet_cap)
    fl = inst.fleet.mhers
    lo = [inst.sigma1 * chi[m] * fl[m].h_max for m in range(M)]
    hi = [chi[m] * fl[m].h_max for m in range(M)]
    prem = [m for m in range(M) if fl[m].premium and chi[m]]
    floor = inst.sigma2 * sum(hi[m] for m in prem)
    tol = 1e-9 * max(1.0, floor)
    free_axes = [m for m in range(M) if hi[m] > lo[m]]
    seen: dict[tuple, tuple[float, ...]] = {}

    def keep(v: list[float]) -> None:
        if sum(v[m] for m in prem) >= floor - tol:
            t = tuple(float(a) for a in v)
            seen.setdefault(tuple(round(a, 9) for a in t), t)

    for bits in itertools.product((0, 1), repeat=len(free_axes)):
        v = list(lo)
        for m, b in zip(free_axes, bits):
            v[m] = hi[m] if b else lo[m]
        keep(v)
        # edge points where the premium row is tight along one premium axis
        for i in prem:
            if i not in free_axes:
                continue
            rest = sum(v[m] for m in prem if m != i)
            val = floor - rest
            if lo[i] + tol < val < hi[i] - tol:
                w = list(v)
                w[i] = val
                keep(w)
    return sorted(seen.values())


def enumerate_scenario_vertices(inst: NetworkInstance, x: tuple[int, ...], z: FirstStageDecision,
                                cap: int = 20, fleet_cap: int = 8) -> list[Scenario]:
    """All binary damage patterns crossed with all H0 vertices."""
    us = u_patterns(inst, x, cap)
    hs = h0_vertices(inst, z.chi, fleet_cap)
    return [Scenario(u, h) for u in us for h in hs]


def polytope_vertices(C: np.ndarray, d: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Brute-force vertices of {w : C w >= d} by active-set enumeration."""
    m, n = C.shape
    if n == 0:
        return np.zeros((1, 0)) if np.all(d <= tol) else np.zeros((0, 0))
    verts = []
    combos = list(itertools.combinations(range(m), n))
    for start in range(0, len(combos), 20000):
        chunk = np.array(combos[start:start + 20000])
        Bs = C[chunk]
        ds = d[chunk]
        dets = np.linalg.det(Bs)
        ok = np.abs(dets) > 1e-10
        if not np.any(ok):
            continue
        sol = np.linalg.solve(Bs[ok], ds[ok][..., None])[..., 0]
        feas = np.all(sol @ C.T >= d - 1e-7, axis=1)
        verts.extend(sol[feas])
    if not verts:
        return np.zeros((0, n))
    V = np.round(np.array(verts), 9)
    return np.unique(V, axis=0)


def relaxed_ddu_matrix(inst: NetworkInstance, x: tuple[int, ...], chi: tuple[int, ...]):
    """(C, d) of the relaxed set over w = (u, H0) with x and chi fixed."""
    un = [u_name(l) for l in inst.vulnerable]
    hn = [h0_name(m) for m in range(inst.n_mhers)]
    cols = {n: i for i, n in enumerate(un + hn)}
    fixed = {x_name(l): float(v) for l, v in zip(inst.vulnerable, x)}
    fixed.update({chi_name(m): float(c) for m, c in enumerate(chi)})
    rows = ddu_rows(inst)
    C = np.zeros((len(rows), len(cols)))
    d = np.zeros(len(rows))
    for r, row in enumerate(rows):
        for k, c in row.w.items():
            C[r, cols[k]] = c
        d[r] = row.d - sum(c * fixed[k] for k, c in row.ext.items())
    return C, d


# -- KKT encodings ------------------------------------------------------------------


def _interval(coeffs: dict[str, float], box: dict[str, tuple[float, float]]) -> tuple[float, float]:
    lo = hi = 0.0
    for k, c in coeffs.items():
        a, b = box[k]
        lo += min(c * a, c * b)
        hi += max(c * a, c * b)
    return lo, hi


def kkt_block(rows: list[LinearRow], cost: dict[str, float], box: dict[str, tuple[float, float]],
              mult_bounds: list[float], prefix: str, slack_margin: float = 1.0 + 1e-6) -> ConstraintBlock:
    """Optimality of w for min cost^T w s.t. rows, as primal feasibility, stationarity
    and big-M complementarity. Variables in ``box`` must be declared elsewhere.
    """
    blk = ConstraintBlock(f"kkt {prefix}")
    stat: dict[str, dict[str, float]] = {}
    for r, (row, mb) in enumerate(zip(rows, mult_bounds)):
        a = f"{prefix}_a[{r}]"
        dlt = f"{prefix}_d[{r}]"
        blk.add_var(a, CONTINUOUS, 0.0, mb)
        blk.add_var(dlt, BINARY)
        expr = dict(row.w)
        for k, c in row.ext.items():
            expr[k] = expr.get(k, 0.0) + c
        blk.add_row(expr, GE, row.d, name=f"{prefix}_primal[{row.name}]")
        _, hi = _interval(expr, box)
        smax = max(hi - row.d, 0.0) * slack_margin + 1e-9
        # slack <= smax (1 - delta)
        comp = dict(expr)
        comp[dlt] = smax
        blk.add_row(comp, LE, row.d + smax, name=f"{prefix}_cs_slack[{row.name}]")
        blk.add_row({a: 1.0, dlt: -mb}, LE, 0.0, name=f"{prefix}_cs_mult[{row.name}]")
        for k, c in row.w.items():
            stat.setdefault(k, {})[a] = c
    for k in sorted(set(stat) | set(cost)):
        blk.add_row(stat.get(k, {}), EQ, cost.get(k, 0.0), name=f"{prefix}_stat[{k}]")
    return blk


@dataclass
class OUBlock:
    block: ConstraintBlock
    eta: str
    u_names: list[str]
    h0_names: list[str]
    eta_bounds: tuple[float, float]


def pair_affine(inst: NetworkInstance, pairs: VUPairSet):
    """For each pair: (const, g over u, h over H0, k over chi) of mu^T b(u, H0, chi)."""
    tpl = RecourseTemplate.build(inst)
    out = []
    for ups, mu in pairs:
        b0, B, C, X = tpl.affine_parts(ups, chi=None)
        out.append((float(mu.mu @ b0), mu.mu @ B, mu.mu @ C, mu.mu @ X))
    return out


def build_ou_block(inst: NetworkInstance, pairs: VUPairSet, tag: str = "",
                   mult_margin: float = 1.01) -> OUBlock:
    """Scenarios minimizing max_i mu_i^T b_i(u, H0) over the relaxed set, via KKT.

    References u and H0 (tagged) and first-stage x, chi; declares eta, the
    multipliers and the complementarity indicators.
    """
    if len(pairs) == 0:
        raise ModelError("OU block needs a nonempty pair set")
    aff = pair_affine(inst, pairs)
    un = [u_name(l, tag) for l in inst.vulnerable]
    hn = [h0_name(m, tag) for m in range(inst.n_mhers)]
    eta = f"eta{tag}"
    box: dict[str, tuple[float, float]] = {}
    for l, u in zip(inst.vulnerable, un):
        box[u] = (0.0, 1.0)
        box[x_name(l)] = (0.0, 1.0)
    for m, h in enumerate(hn):
        box[h] = (0.0, inst.fleet.mhers[m].h_max)
        box[chi_name(m)] = (0.0, 1.0)
    lows, highs = [], []
    rows: list[LinearRow] = []
    for i, (c0, g, h, k) in enumerate(aff):
        w = {eta: 1.0}
        for u, gv in zip(un, g):
            if gv:
                w[u] = -float(gv)
        for hname, hv in zip(hn, h):
            if hv:
                w[hname] = -float(hv)
        ext = {chi_name(m): -float(kv) for m, kv in enumerate(k) if kv}
        rows.append(LinearRow(w, ext, c0, f"eta{i}"))
        lo, hi = _interval({kk: -vv for kk, vv in {**w, **ext}.items() if kk != eta}, box)
        lows.append(c0 + lo)
        highs.append(c0 + hi)
    eta_lo, eta_hi = max(lows), max(highs)
    box[eta] = (eta_lo, eta_hi)
    G = max((float(np.max(np.abs(g))) for _, g, _, _ in aff if len(g)), default=0.0)
    Hc = max((float(np.max(np.abs(h))) for _, _, h, _ in aff if len(h)), default=0.0)
    bounds = [1.0] * len(rows)
    for r in ddu_rows(inst, tag, un, hn):
        rows.append(r)
        if r.name.startswith("card"):
            bounds.append(G * mult_margin + 1e-9)
        elif r.name.startswith("premium"):
            bounds.append(Hc * mult_margin + 1e-9)
        elif r.name.startswith(("harden", "u_ub")):
            bounds.append(2 * G * mult_margin + 1e-9)
        else:
            bounds.append(2 * Hc * mult_margin + 1e-9)
    kkt = kkt_block(rows, {eta: 1.0}, box, bounds, f"ou{tag}")
    blk = ConstraintBlock(f"ou{tag}")
    blk.add_var(eta, CONTINUOUS, eta_lo, eta_hi)
    blk.include(kkt)
    return OUBlock(blk, eta, un, hn, (eta_lo, eta_hi))


def ou_prime_weights(inst: NetworkInstance, u_star: tuple[int, ...],
                     history: list[tuple[int, ...]]) -> np.ndarray:
    """a + theta: a = M2 on the zeros of u*, theta counts damage over the inner iterates."""
    nv = len(inst.vulnerable)
    theta = np.zeros(nv)
    for u in history:
        theta += 1.0 - np.asarray(u, dtype=float)
    m2 = 10.0 * nv * (1.0 + (theta.max() if nv else 0.0))
    a = np.where(np.asarray(u_star) == 0, m2, 0.0)
    return a + theta


def build_ou_prime_block(inst: NetworkInstance, u_star: tuple[int, ...], history: list[tuple[int, ...]],
                         tag: str = "", mult_margin: float = 1.01) -> ConstraintBlock:
    """Optimality of min (a + theta)^T u over the damage rows, u declared here (tagged)."""
    c = ou_prime_weights(inst, u_star, history)
    un = [u_name(l, tag) for l in inst.vulnerable]
    blk = ConstraintBlock(f"ou_prime{tag}")
    box: dict[str, tuple[float, float]] = {}
    for l, u in zip(inst.vulnerable, un):
        blk.add_var(u, BINARY)
        box[u] = (0.0, 1.0)
        box[x_name(l)] = (0.0, 1.0)
    rows = [r for r in ddu_rows(inst, tag, un, []) if not r.name.startswith(("h0", "premium"))]
    G = float(c.max()) if len(c) else 0.0
    bounds = [(G if r.name.startswith("card") else 2 * G) * mult_margin + 1e-9 for r in rows]
    blk.include(kkt_block(rows, dict(zip(un, c)), box, bounds, f"oup{tag}"))
    return blk
