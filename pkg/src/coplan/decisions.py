"""Decision and scenario value types shared by all modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

from coplan.instance import NetworkInstance


@dataclass(frozen=True)
class FirstStageDecision:
    x: tuple[int, ...]  # per vulnerable line, 1 = hardened
    chi: tuple[int, ...]  # per MHER, 1 = rented
    g0: tuple[tuple[int, ...], ...]  # MHER x EH, pre-allocation

    @classmethod
    def empty(cls, inst: NetworkInstance) -> "FirstStageDecision":
        ne = len(inst.eh_nodes)
        return cls((0,) * len(inst.vulnerable), (0,) * inst.n_mhers,
                   tuple((0,) * ne for _ in range(inst.n_mhers)))

    def cost(self, inst: NetworkInstance) -> float:
        return float(self.exact_cost(inst))

    def exact_cost(self, inst: NetworkInstance) -> Fraction:
        """Cost as an exact rational so equal plans compare equal."""
        total = Fraction(0)
        for xi, c in zip(self.x, inst.hardening_costs()):
            if xi:
                total += Fraction(float(c))
        for ci, c in zip(self.chi, inst.rental_costs()):
            if ci:
                total += Fraction(float(c))
        return total

    def feasible(self, inst: NetworkInstance) -> bool:
        if np.isfinite(inst.budget) and self.exact_cost(inst) > Fraction(inst.budget):
            return False
        for m, row in enumerate(self.g0):
            if sum(row) != self.chi[m]:
                return False
        for e, j in enumerate(inst.eh_nodes):
            if sum(row[e] for row in self.g0) > inst.nodes[j].parking:
                return False
        return True

    def hardened_ids(self, inst: NetworkInstance) -> list[str]:
        return [inst.lines[l].id for l, xi in zip(inst.vulnerable, self.x) if xi]

    def rented_ids(self, inst: NetworkInstance) -> list[str]:
        return [m.id for m, c in zip(inst.fleet.mhers, self.chi) if c]

    def placement(self, inst: NetworkInstance) -> dict[str, str]:
        out = {}
        for m, row in enumerate(self.g0):
            for e, v in enumerate(row):
                if v:
                    out[inst.fleet.mhers[m].id] = inst.nodes[inst.eh_nodes[e]].id
        return out


@dataclass(frozen=True)
class Scenario:
    u: tuple[int, ...]  # per vulnerable line, 0 = damaged
    h0: tuple[float, ...]  # per MHER, kg

    def key(self) -> tuple:
        return (self.u, tuple(round(h, 9) for h in self.h0))

    def damaged_ids(self, inst: NetworkInstance) -> list[str]:
        return [inst.lines[l].id for l, ui in zip(inst.vulnerable, self.u) if not ui]


@dataclass(frozen=True)
class Upsilon:
    """Binary recourse decisions: routing gamma (M,E,T) and switches omega (Ls,T)."""

    gamma: tuple[int, ...]
    omega: tuple[int, ...]

    def key(self) -> tuple:
        return (self.gamma, self.omega)

    def gamma_array(self, inst: NetworkInstance) -> np.ndarray:
        return np.array(self.gamma, dtype=float).reshape(inst.n_mhers, len(inst.eh_nodes), inst.periods)

    def omega_array(self, inst: NetworkInstance) -> np.ndarray:
        return np.array(self.omega, dtype=float).reshape(len(inst.switchable), inst.periods)


@dataclass
class RecoursePlan:
    """Optimal post-event operation at one (first stage, scenario) pair."""

    scenario: Scenario
    chi: tuple[int, ...]
    g0: tuple[tuple[int, ...], ...]
    upsilon: Upsilon
    objective: float
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __getattr__(self, name: str) -> np.ndarray:
        arrays = self.__dict__.get("arrays", {})
        if name in arrays:
            return arrays[name]
        raise AttributeError(name)


@dataclass(frozen=True)
class DualPoint:
    """Row multipliers of the recourse LP template (>= / = rows of a max problem)."""

    mu: np.ndarray
    is_lambda: np.ndarray  # True for rows coupled to H0 / routing, False for topology rows

    @property
    def lam(self) -> np.ndarray:
        return self.mu[self.is_lambda]

    @property
    def pi(self) -> np.ndarray:
        return self.mu[~self.is_lambda]


@dataclass
class VUPairSet:
    """Ordered (upsilon, mu) pairs with pairwise distinct upsilon."""

    pairs: list[tuple[Upsilon, DualPoint]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[tuple[Upsilon, DualPoint]]:
        return iter(self.pairs)

    def __contains__(self, ups: Upsilon) -> bool:
        return any(u.key() == ups.key() for u, _ in self.pairs)

    def add(self, ups: Upsilon, mu: DualPoint) -> bool:
        if ups in self:
            return False
        self.pairs.append((ups, mu))
        return True

    def copy(self) -> "VUPairSet":
        return VUPairSet(list(self.pairs))
