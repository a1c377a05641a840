"""Sparse MILP modelling, simplex, branch-and-bound and LP export."""
from .milp_model import (
    INF,
    BranchingRule,
    MilpModel,
    NodeSelection,
    ObjSense,
    RowSense,
    Solution,
    SolverOptions,
    SolveStatus,
    VarType,
)
from .simplex import solve_lp
from .branch_bound import solve_milp
from .lp_export import export_lp_text, write_lp

__all__ = [
    "INF",
    "BranchingRule",
    "MilpModel",
    "NodeSelection",
    "ObjSense",
    "RowSense",
    "Solution",
    "SolverOptions",
    "SolveStatus",
    "VarType",
    "solve_lp",
    "solve_milp",
    "export_lp_text",
    "write_lp",
]
