"""Linear model building and a self-contained reference MILP solver."""
from .lpfile import write_lp
from .model import (
    BranchRule,
    ConicRow,
    Constraint,
    MilpModel,
    ModelBlock,
    ModelError,
    SolveOutcome,
    SolverConfig,
    Status,
    Variable,
    add_scenario_block,
)
from .simplex import SolverError
from .solver import solve, solve_lp, solve_milp

__all__ = [
    "BranchRule", "ConicRow", "Constraint", "MilpModel", "ModelBlock", "ModelError",
    "SolveOutcome", "SolverConfig", "SolverError", "Status", "Variable",
    "add_scenario_block", "solve", "solve_lp", "solve_milp", "write_lp",
]
