"""Solver-agnostic model registry: variables, linear rows, objective, conic rows."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .simplex import EQ, GE, LE

_SENSES = {"<=": LE, "=": EQ, "==": EQ, ">=": GE}


class ModelError(ValueError):
    """Inconsistent model construction (bad bounds, name clashes, unknown names)."""


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time_limit"


class BranchRule(str, Enum):
    MOST_FRACTIONAL = "most-fractional"
    PSEUDO_COST = "pseudo-cost"


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    binary: bool = False


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str | None = None


@dataclass(frozen=True)
class ConicRow:
    """``||x[indices]||_2 <= radius`` or, with ``radius_var``, ``<= x[radius_var]``."""

    indices: tuple[int, ...]
    radius: float = 0.0
    radius_var: int | None = None


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-7
    int_tol: float = 1e-6
    time_limit: float = 1000.0
    conic_tol: float = 1e-7
    branching: BranchRule = BranchRule.MOST_FRACTIONAL
    max_cuts_per_node: int = 200

    def __post_init__(self):
        for name in ("feas_tol", "int_tol", "time_limit", "conic_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "branching", BranchRule(self.branching))


@dataclass
class SolveOutcome:
    status: Status
    objective: float
    assignment: np.ndarray | None
    node_count: int = 0
    wall_time: float = 0.0
    warnings: list[str] = field(default_factory=list)
    conic_residual: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.assignment is not None

    def value(self, model: "MilpModel", name: str) -> float:
        return float(self.assignment[model.var(name)])

    def values(self, idx) -> np.ndarray:
        return np.asarray(self.assignment)[np.asarray(idx, dtype=int)]


def _coerce_coeffs(coeffs) -> dict[int, float]:
    items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
    out: dict[int, float] = {}
    for k, v in items:
        if v != 0.0:
            out[int(k)] = out.get(int(k), 0.0) + float(v)
    return out


class MilpModel:
    """Mutable registry of a mixed-binary linear program.

    Coefficient rows are ``{variable_index: coefficient}`` mappings (or
    iterables of pairs). All variables must carry finite bounds.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.conic_rows: list[ConicRow] = []
        self.objective: dict[int, float] = {}
        self.obj_constant = 0.0
        self.sense = "min"
        self._index: dict[str, int] = {}

    # -- construction ---------------------------------------------------
    def add_var(self, name: str, lb: float, ub: float, binary: bool = False) -> int:
        lb, ub = float(lb), float(ub)
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if not (math.isfinite(lb) and math.isfinite(ub)):
            raise ModelError(f"variable {name!r} needs finite bounds")
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        if name in self._index:
            k = self._index[name]
            old = self.variables[k]
            if (old.lb, old.ub, old.binary) != (lb, ub, binary):
                raise ModelError(f"variable {name!r} re-declared with different bounds")
            return k
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, lb, ub, binary))
        return len(self.variables) - 1

    def add_constr(self, coeffs, sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in _SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        row = _coerce_coeffs(coeffs)
        for k in row:
            if not 0 <= k < len(self.variables):
                raise ModelError(f"constraint {name!r} references unknown variable {k}")
        self.constraints.append(Constraint(row, sense, float(rhs), name))
        return len(self.constraints) - 1

    def add_conic(self, indices: Iterable[int], radius: float = 0.0, radius_var: int | None = None):
        self.conic_rows.append(ConicRow(tuple(int(i) for i in indices), float(radius), radius_var))

    def set_objective(self, coeffs, sense: str = "min", constant: float = 0.0):
        if sense not in ("min", "max"):
            raise ModelError(f"unknown objective sense {sense!r}")
        self.objective = _coerce_coeffs(coeffs)
        self.sense = sense
        self.obj_constant = float(constant)

    def set_bounds(self, name_or_index, lb: float, ub: float):
        k = self.var(name_or_index) if isinstance(name_or_index, str) else int(name_or_index)
        v = self.variables[k]
        self.variables[k] = Variable(v.name, float(lb), float(ub), v.binary)

    # -- queries --------------------------------------------------------
    def var(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def has_var(self, name: str) -> bool:
        return name in self._index

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> np.ndarray:
        return np.array([k for k, v in enumerate(self.variables) if v.binary], dtype=int)

    @property
    def n_binaries(self) -> int:
        return int(sum(v.binary for v in self.variables))

    def copy(self) -> "MilpModel":
        return copy.deepcopy(self)

    def evaluate_objective(self, x) -> float:
        return self.obj_constant + sum(c * float(x[k]) for k, c in self.objective.items())

    def max_violation(self, x) -> float:
        """Largest violation of bounds or linear rows at ``x``."""
        x = np.asarray(x, dtype=float)
        lb, ub = self.bounds()
        worst = float(max(np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0)))
        for con in self.constraints:
            lhs = sum(c * x[k] for k, c in con.coeffs.items())
            if con.sense == "<=":
                worst = max(worst, lhs - con.rhs)
            elif con.sense == ">=":
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return lb, ub

    def to_arrays(self):
        """Dense arrays ``(c, A, senses, b, lb, ub)`` with ``c`` in minimisation form."""
        n = self.n_vars
        c = np.zeros(n)
        for k, v in self.objective.items():
            c[k] = v
        if self.sense == "max":
            c = -c
        A = np.zeros((len(self.constraints), n))
        senses = np.empty(len(self.constraints), dtype=int)
        b = np.empty(len(self.constraints))
        for r, con in enumerate(self.constraints):
            for k, v in con.coeffs.items():
                A[r, k] = v
            senses[r] = _SENSES[con.sense]
            b[r] = con.rhs
        lb, ub = self.bounds()
        return c, A, senses, b, lb, ub


@dataclass
class ModelBlock:
    """A bundle of variables and rows addressed by variable name.

    Rows may reference variables declared in the block or already present in
    the target model.
    """

    variables: list[Variable] = field(default_factory=list)
    rows: list[tuple[dict[str, float], str, float, str | None]] = field(default_factory=list)
    conic: list[tuple[tuple[str, ...], float, str | None]] = field(default_factory=list)

    def var(self, name: str, lb: float, ub: float, binary: bool = False) -> str:
        self.variables.append(Variable(name, float(lb), float(ub), binary))
        return name

    def constr(self, coeffs: Mapping[str, float], sense: str, rhs: float, name: str | None = None):
        self.rows.append((dict(coeffs), sense, float(rhs), name))

    def conic_row(self, names: Iterable[str], radius: float = 0.0, radius_var: str | None = None):
        self.conic.append((tuple(names), float(radius), radius_var))


def add_scenario_block(model: MilpModel, block: ModelBlock) -> MilpModel:
    """Append ``block`` to ``model`` in place and return it.

    Re-declaring an existing variable with identical bounds is a no-op;
    different bounds raise :class:`ModelError`. Existing rows are untouched.
    """
    for v in block.variables:
        model.add_var(v.name, v.lb, v.ub, v.binary)
    for coeffs, sense, rhs, name in block.rows:
        row: dict[int, float] = {}
        for vname, coef in coeffs.items():
            k = model.var(vname)
            row[k] = row.get(k, 0.0) + coef
        model.add_constr(row, sense, rhs, name)
    for names, radius, rvar in block.conic:
        model.add_conic([model.var(nm) for nm in names], radius,
                        None if rvar is None else model.var(rvar))
    return model
