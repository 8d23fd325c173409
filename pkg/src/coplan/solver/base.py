"""Shared solver types and the backend registry."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from coplan.model import CompiledModel, ConstraintBlock, ModelError

OPTIMAL = "optimal"
FEASIBLE_LIMIT = "feasible-limit"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ERROR = "error"

FEAS_TOL = 1e-6


class SolverError(RuntimeError):
    """A backend failed or returned an unusable status."""

    def __init__(self, message: str, status: str = ERROR):
        self.status = status
        super().__init__(message)


@dataclass(frozen=True)
class SolveParams:
    """Knobs passed to every backend."""

    gap: float = 1e-9
    abs_gap: float = 1e-10
    time_limit: float = math.inf
    threads: int = 1
    seed: int = 0
    verbose: bool = False
    feas_tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.gap < 0:
            raise ValueError("gap must be >= 0")
        if not self.time_limit > 0:
            raise ValueError("time limit must be > 0")


@dataclass
class MilpSolution:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    bound: float = math.nan
    wall: float = 0.0
    row_duals: np.ndarray | None = None
    index: dict[str, int] = field(default_factory=dict, repr=False)
    message: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE_LIMIT) and self.x is not None

    def __getitem__(self, name: str) -> float:
        return float(self.x[self.index[name]])

    def get(self, name: str, default: float = 0.0) -> float:
        j = self.index.get(name)
        return default if j is None else float(self.x[j])

    @property
    def values(self) -> dict[str, float]:
        return {n: float(self.x[j]) for n, j in self.index.items()}


class Backend(ABC):
    name = "abstract"

    @abstractmethod
    def solve(self, model: CompiledModel, params: SolveParams, want_duals: bool = False) -> MilpSolution:
        """Solve the model; duals follow the convention A^T mu = c (stated sense)."""


_BACKENDS: dict[str, Backend] = {}


def register(backend: Backend) -> None:
    _BACKENDS[backend.name] = backend


def get_backend(name: str = "highs") -> Backend:
    if name not in _BACKENDS:
        if name == "highs":
            from coplan.solver.highs import HighsBackend
            register(HighsBackend())
        elif name == "reference":
            from coplan.solver.reference import ReferenceBackend
            register(ReferenceBackend())
        else:
            raise SolverError(f"unknown backend {name!r}")
    return _BACKENDS[name]


def _compiled(model: ConstraintBlock | CompiledModel) -> CompiledModel:
    return model.compile() if isinstance(model, ConstraintBlock) else model


def solve_milp(model: ConstraintBlock | CompiledModel, params: SolveParams | None = None,
               backend: str = "highs") -> MilpSolution:
    cm = _compiled(model)
    sol = get_backend(backend).solve(cm, params or SolveParams())
    sol.index = cm.index
    return sol


def solve_lp_with_duals(model: ConstraintBlock | CompiledModel, params: SolveParams | None = None,
                        backend: str = "highs") -> MilpSolution:
    """Solve a pure LP and return a basic optimal primal/dual pair.

    Row duals satisfy A^T mu + (bound duals) = c for the objective as stated;
    for a max problem with >= rows they are <= 0.
    """
    cm = _compiled(model)
    if cm.has_integers:
        raise ModelError("solve_lp_with_duals needs a model without integer variables")
    sol = get_backend(backend).solve(cm, params or SolveParams(), want_duals=True)
    sol.index = cm.index
    if sol.status != OPTIMAL:
        raise SolverError(f"LP not solved to optimality: {sol.status} {sol.message}", sol.status)
    return sol
