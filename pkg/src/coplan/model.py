"""Solver-agnostic linear constraint blocks.

A ConstraintBlock is a bag of named variables, sparse rows and an optional
objective. Blocks may reference variables they do not declare (for example
first-stage variables owned by an enclosing model); such references must be
resolved by the time the block is compiled.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

INF = math.inf
BINARY = "binary"
CONTINUOUS = "continuous"

LE, GE, EQ = "<=", ">=", "=="
_SENSES = {"<=": LE, "≤": LE, ">=": GE, "≥": GE, "=": EQ, "==": EQ}


class ModelError(ValueError):
    """Raised for malformed blocks."""


@dataclass
class Var:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = INF


@dataclass
class Row:
    coeffs: dict[str, float]
    sense: str
    rhs: float
    name: str = ""
    group: str = ""


class ConstraintBlock:
    def __init__(self, name: str = ""):
        self.name = name
        self.vars: dict[str, Var] = {}
        self.rows: list[Row] = []
        self.objective: dict[str, float] = {}
        self.sense = "min"
        self.objective_constant = 0.0

    # -- construction --------------------------------------------------------

    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = INF) -> str:
        if name in self.vars:
            raise ModelError(f"variable {name!r} declared twice")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        elif kind != CONTINUOUS:
            raise ModelError(f"unknown variable kind {kind!r}")
        if lb > ub:
            raise ModelError(f"variable {name!r} has empty bounds [{lb}, {ub}]")
        self.vars[name] = Var(name, kind, float(lb), float(ub))
        return name

    def add_row(self, coeffs: Mapping[str, float], sense: str, rhs: float,
                name: str = "", group: str = "") -> Row:
        try:
            sense = _SENSES[sense]
        except KeyError:
            raise ModelError(f"unknown row sense {sense!r}") from None
        clean = {k: float(v) for k, v in coeffs.items() if v != 0}
        row = Row(clean, sense, float(rhs), name, group)
        self.rows.append(row)
        return row

    def set_objective(self, coeffs: Mapping[str, float], sense: str = "min", constant: float = 0.0) -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be min or max, got {sense!r}")
        self.objective = {k: float(v) for k, v in coeffs.items() if v != 0}
        self.sense = sense
        self.objective_constant = float(constant)

    def fix(self, name: str, value: float) -> None:
        v = self.vars[name]
        v.lb = v.ub = float(value)

    def include(self, other: "ConstraintBlock") -> None:
        """Merge another block's declarations and rows (objective is ignored)."""
        for name, v in other.vars.items():
            mine = self.vars.get(name)
            if mine is None:
                self.vars[name] = Var(v.name, v.kind, v.lb, v.ub)
            elif (mine.kind, mine.lb, mine.ub) != (v.kind, v.lb, v.ub):
                raise ModelError(f"conflicting declarations of {name!r}")
        self.rows.extend(other.rows)

    # -- inspection ------------------------------------------------------------

    def referenced(self) -> set[str]:
        out: set[str] = set(self.objective)
        for r in self.rows:
            out.update(r.coeffs)
        return out

    def undeclared(self) -> set[str]:
        return self.referenced() - set(self.vars)

    def rows_in(self, group: str) -> list[Row]:
        return [r for r in self.rows if r.group == group]

    def compile(self) -> "CompiledModel":
        missing = self.undeclared()
        if missing:
            raise ModelError(f"undeclared variables: {sorted(missing)[:5]}")
        return CompiledModel.from_block(self)

    def to_lp(self) -> str:
        """LP-format text for debugging; names are sanitized, never parsed back."""
        def nm(s: str) -> str:
            return re.sub(r"[^A-Za-z0-9_().,@#]", "_", s.replace("[", "(").replace("]", ")"))

        def expr(coeffs: Mapping[str, float]) -> str:
            parts = [f"{'-' if c < 0 else '+'} {abs(c):.12g} {nm(k)}" for k, c in coeffs.items()]
            return " ".join(parts) if parts else "0"

        out = ["Maximize" if self.sense == "max" else "Minimize", f" obj: {expr(self.objective)}",
               "Subject To"]
        ops = {LE: "<=", GE: ">=", EQ: "="}
        for i, r in enumerate(self.rows):
            out.append(f" {nm(r.name) or 'r'}#{i}: {expr(r.coeffs)} {ops[r.sense]} {r.rhs:.12g}")
        out.append("Bounds")
        for v in self.vars.values():
            lo = "-inf" if v.lb == -INF else f"{v.lb:.12g}"
            hi = "+inf" if v.ub == INF else f"{v.ub:.12g}"
            out.append(f" {lo} <= {nm(v.name)} <= {hi}")
        bins = [nm(v.name) for v in self.vars.values() if v.kind == BINARY]
        if bins:
            out.append("Binaries")
            out.extend(f" {b}" for b in bins)
        out.append("End")
        return "\n".join(out) + "\n"


@dataclass
class CompiledModel:
    """Column-indexed matrix form: row_lo <= A x <= row_hi, lb <= x <= ub."""

    names: list[str]
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    sense: str = "min"
    constant: float = 0.0
    row_names: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.index:
            self.index = {n: i for i, n in enumerate(self.names)}

    @property
    def n_cols(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def has_integers(self) -> bool:
        return bool(np.any(self.integer))

    @classmethod
    def from_block(cls, block: ConstraintBlock) -> "CompiledModel":
        names = list(block.vars)
        index = {n: i for i, n in enumerate(names)}
        vs = block.vars.values()
        lb = np.array([v.lb for v in vs], dtype=float)
        ub = np.array([v.ub for v in vs], dtype=float)
        integer = np.array([v.kind == BINARY for v in vs], dtype=bool)
        c = np.zeros(len(names))
        for k, val in block.objective.items():
            c[index[k]] += val
        ri, ci, vals = [], [], []
        lo = np.empty(len(block.rows))
        hi = np.empty(len(block.rows))
        for r, row in enumerate(block.rows):
            for k, val in row.coeffs.items():
                ri.append(r)
                ci.append(index[k])
                vals.append(val)
            lo[r] = row.rhs if row.sense in (GE, EQ) else -INF
            hi[r] = row.rhs if row.sense in (LE, EQ) else INF
        A = sp.csr_matrix((vals, (ri, ci)), shape=(len(block.rows), len(names)))
        A.sum_duplicates()
        return cls(names, c, lb, ub, integer, A, lo, hi, block.sense, block.objective_constant,
                   [r.name for r in block.rows], index)

    def col(self, name: str) -> int:
        return self.index[name]

    def with_bounds(self, fixes: Mapping[str, float] | Iterable[tuple[str, float]]) -> "CompiledModel":
        """Shallow copy with some columns fixed to values."""
        lb, ub = self.lb.copy(), self.ub.copy()
        items = fixes.items() if isinstance(fixes, Mapping) else fixes
        for name, val in items:
            j = self.index[name]
            lb[j] = ub[j] = val
        return CompiledModel(self.names, self.c, lb, ub, self.integer, self.A, self.row_lo,
                             self.row_hi, self.sense, self.constant, self.row_names, self.index)

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.constant

    def max_violation(self, x: np.ndarray) -> float:
        ax = self.A @ x
        v = max(0.0, float(np.max(self.row_lo - ax, initial=0.0)), float(np.max(ax - self.row_hi, initial=0.0)))
        v = max(v, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        if self.has_integers:
            xi = x[self.integer]
            v = max(v, float(np.max(np.abs(xi - np.round(xi)), initial=0.0)))
        return v


def linearize_product(kind: str, a: str, b: str, bound: float = 1.0, w: str | None = None,
                      declare_w: bool = True) -> ConstraintBlock:
    """Exact linearization of w = a*b where a is binary.

    kind "binary*continuous": b in [0, bound]; rows 0 <= w <= a*bound and
    b + (a-1)*bound <= w <= b.
    kind "binary*binary": w <= a, w <= b, w >= a + b - 1, w >= 0.
    """
    if not bound > 0:
        raise ModelError("linearize_product needs a positive bound")
    w = w or f"{a}*{b}"
    blk = ConstraintBlock(f"product {w}")
    if kind in ("binary*continuous", "binary×continuous"):
        if declare_w:
            blk.add_var(w, CONTINUOUS, 0.0, bound)
        blk.add_row({w: 1.0, a: -bound}, LE, 0.0, name=f"lin_up[{w}]")
        blk.add_row({w: 1.0, b: -1.0, a: -bound}, GE, -bound, name=f"lin_lo[{w}]")
        blk.add_row({w: 1.0, b: -1.0}, LE, 0.0, name=f"lin_b[{w}]")
    elif kind in ("binary*binary", "binary×binary"):
        if declare_w:
            blk.add_var(w, CONTINUOUS, 0.0, 1.0)
        blk.add_row({w: 1.0, a: -1.0}, LE, 0.0, name=f"and_a[{w}]")
        blk.add_row({w: 1.0, b: -1.0}, LE, 0.0, name=f"and_b[{w}]")
        blk.add_row({w: 1.0, a: -1.0, b: -1.0}, GE, -1.0, name=f"and_ab[{w}]")
    else:
        raise ModelError(f"unknown product kind {kind!r}")
    return blk
