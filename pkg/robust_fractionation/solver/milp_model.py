"""
Sparse Mixed-Integer Linear Model.
Variables with bounds and integrality, tagged sparse rows, a linear objective, and the
Solution / SolverOptions containers shared by the simplex and branch-and-bound.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

INF = float("inf")

Coefficients = Union[Mapping[int, float], Tuple[Sequence[int], Sequence[float]]]


class VarType(Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class RowSense(Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class ObjSense(Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"


@dataclass
class Variable:
    index: int
    name: str
    lb: float
    ub: float
    vtype: VarType = VarType.CONTINUOUS

    @property
    def is_binary(self) -> bool:
        return self.vtype is VarType.BINARY


@dataclass
class Row:
    name: str
    indices: np.ndarray
    coefs: np.ndarray
    sense: RowSense
    rhs: float
    family: str = "other"

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def activity(self, x: np.ndarray) -> float:
        return float(np.dot(self.coefs, x[self.indices]))

    def violation(self, x: np.ndarray) -> float:
        value = self.activity(x)
        if self.sense is RowSense.LE:
            return max(value - self.rhs, 0.0)
        if self.sense is RowSense.GE:
            return max(self.rhs - value, 0.0)
        return abs(value - self.rhs)


@dataclass
class ModelArrays:
    """Matrix form of a model with the objective turned into minimization."""
    A: sp.csr_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cost: np.ndarray
    obj_sign: float
    binaries: np.ndarray

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_cols(self) -> int:
        return self.A.shape[1]


class MilpModel:
    """
    Container for a mixed-integer linear program.

    Rows carry a family tag so model sizes can be reported per constraint family.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: List[Variable] = []
        self.rows: List[Row] = []
        self.objective: Dict[int, float] = {}
        self.obj_sense = ObjSense.MAXIMIZE
        self._arrays: Optional[ModelArrays] = None

    # =========================================================================
    # Construction
    # =========================================================================

    def add_variable(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = INF,
        vtype: VarType = VarType.CONTINUOUS,
    ) -> int:
        """Declare a variable and return its index."""
        if vtype is VarType.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {name}: lower bound {lb} exceeds upper bound {ub}")
        index = len(self.variables)
        self.variables.append(Variable(index, name, float(lb), float(ub), vtype))
        self._arrays = None
        return index

    def add_variables(
        self,
        prefix: str,
        count: int,
        lb: float = 0.0,
        ub: float = INF,
        vtype: VarType = VarType.CONTINUOUS,
    ) -> np.ndarray:
        """Declare ``count`` variables named prefix[0], prefix[1], ... and return their indices."""
        return np.array(
            [self.add_variable(f"{prefix}[{k}]", lb, ub, vtype) for k in range(count)],
            dtype=np.int64,
        )

    def add_row(
        self,
        coefs: Coefficients,
        sense: RowSense,
        rhs: float,
        name: Optional[str] = None,
        family: str = "other",
    ) -> int:
        """
        Add a sparse row.

        Args:
            coefs: Mapping index -> coefficient, or a pair (indices, values); repeated
                indices are summed
            sense: Row sense
            rhs: Right-hand side
            name: Row name (defaults to r<k>)
            family: Constraint family tag

        Returns:
            Index of the new row
        """
        if isinstance(coefs, Mapping):
            idx = np.fromiter(coefs.keys(), dtype=np.int64, count=len(coefs))
            val = np.fromiter(coefs.values(), dtype=float, count=len(coefs))
        else:
            idx = np.asarray(coefs[0], dtype=np.int64)
            val = np.asarray(coefs[1], dtype=float)
            if len(idx) != len(val):
                raise ValueError("row indices and values differ in length")
            if len(idx) and len(np.unique(idx)) != len(idx):
                idx, inverse = np.unique(idx, return_inverse=True)
                val = np.bincount(inverse, weights=val, minlength=len(idx))
        keep = val != 0.0
        idx, val = idx[keep], val[keep]
        if len(idx) and (idx.min() < 0 or idx.max() >= len(self.variables)):
            raise ValueError(f"row {name or len(self.rows)} references an undeclared variable")
        index = len(self.rows)
        self.rows.append(Row(name or f"r{index}", idx, val, sense, float(rhs), family))
        self._arrays = None
        return index

    def set_objective(self, coefs: Mapping[int, float], sense: ObjSense = ObjSense.MAXIMIZE) -> None:
        self.objective = {int(j): float(v) for j, v in coefs.items() if v != 0.0}
        self.obj_sense = sense
        self._arrays = None

    def set_bounds(self, index: int, lb: float, ub: float) -> None:
        if lb > ub:
            raise ValueError(f"variable {self.variables[index].name}: lower bound {lb} exceeds {ub}")
        var = self.variables[index]
        var.lb, var.ub = float(lb), float(ub)
        self._arrays = None

    def fix_variable(self, index: int, value: float) -> None:
        self.set_bounds(index, value, value)

    # =========================================================================
    # Queries
    # =========================================================================

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def num_binaries(self) -> int:
        return sum(1 for v in self.variables if v.is_binary)

    @property
    def nnz(self) -> int:
        return sum(r.nnz for r in self.rows)

    def binary_indices(self) -> np.ndarray:
        return np.array([v.index for v in self.variables if v.is_binary], dtype=np.int64)

    def variable_index(self, name: str) -> int:
        for var in self.variables:
            if var.name == name:
                return var.index
        raise KeyError(name)

    def family_counts(self) -> Dict[str, int]:
        """Number of rows per constraint family, in first-seen order."""
        return dict(Counter(r.family for r in self.rows))

    def rows_in_family(self, family: str) -> List[Row]:
        return [r for r in self.rows if r.family == family]

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(c * x[j] for j, c in self.objective.items()))

    def to_arrays(self) -> ModelArrays:
        """Matrix form of the model; cached until the model changes."""
        if self._arrays is not None:
            return self._arrays
        m, n = self.num_rows, self.num_variables
        if m:
            lengths = np.fromiter((r.nnz for r in self.rows), dtype=np.int64, count=m)
            row_ids = np.repeat(np.arange(m), lengths)
            cols = np.concatenate([r.indices for r in self.rows]) if lengths.sum() else np.zeros(0, np.int64)
            vals = np.concatenate([r.coefs for r in self.rows]) if lengths.sum() else np.zeros(0)
        else:
            row_ids = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        A = sp.csr_matrix((vals, (row_ids, cols)), shape=(m, n))

        row_lower = np.full(m, -INF)
        row_upper = np.full(m, INF)
        for i, r in enumerate(self.rows):
            if r.sense is not RowSense.LE:
                row_lower[i] = r.rhs
            if r.sense is not RowSense.GE:
                row_upper[i] = r.rhs

        sign = -1.0 if self.obj_sense is ObjSense.MAXIMIZE else 1.0
        cost = np.zeros(n)
        for j, c in self.objective.items():
            cost[j] = sign * c

        self._arrays = ModelArrays(
            A=A,
            row_lower=row_lower,
            row_upper=row_upper,
            lower=np.array([v.lb for v in self.variables]),
            upper=np.array([v.ub for v in self.variables]),
            cost=cost,
            obj_sign=sign,
            binaries=self.binary_indices(),
        )
        return self._arrays

    def max_violation(self, x: np.ndarray, integrality: bool = True) -> float:
        """Largest absolute violation of a row, a bound or (optionally) integrality at ``x``."""
        arrays = self.to_arrays()
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if arrays.num_rows:
            act = arrays.A @ x
            worst = max(
                worst,
                float(np.max(np.maximum(arrays.row_lower - act, 0.0))),
                float(np.max(np.maximum(act - arrays.row_upper, 0.0))),
            )
        if arrays.num_cols:
            worst = max(
                worst,
                float(np.max(np.maximum(arrays.lower - x, 0.0))),
                float(np.max(np.maximum(x - arrays.upper, 0.0))),
            )
        if integrality and len(arrays.binaries):
            xb = x[arrays.binaries]
            worst = max(worst, float(np.max(np.abs(xb - np.round(xb)))))
        return worst

    def validate(self) -> None:
        """Check the model invariants; raises ValueError."""
        for var in self.variables:
            if var.is_binary and not (0.0 <= var.lb <= var.ub <= 1.0):
                raise ValueError(f"binary {var.name} has bounds [{var.lb}, {var.ub}] outside [0, 1]")
            if var.lb > var.ub:
                raise ValueError(f"variable {var.name} has empty bounds [{var.lb}, {var.ub}]")
        n = self.num_variables
        for row in self.rows:
            if len(row.indices) and (row.indices.min() < 0 or row.indices.max() >= n):
                raise ValueError(f"row {row.name} references an undeclared variable")
            if not np.isfinite(row.rhs):
                raise ValueError(f"row {row.name} has a non-finite right-hand side")
        for j in self.objective:
            if not 0 <= j < n:
                raise ValueError(f"objective references undeclared variable {j}")

    def size_summary(self) -> Dict[str, int]:
        return {
            "variables": self.num_variables,
            "rows": self.num_rows,
            "binaries": self.num_binaries,
            "nonzeros": self.nnz,
        }

    def __repr__(self) -> str:
        return (
            f"MilpModel({self.name!r}, variables={self.num_variables}, rows={self.num_rows}, "
            f"binaries={self.num_binaries})"
        )


# =============================================================================
# Solve results and options
# =============================================================================

class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    GAP_LIMIT = "GapLimit"
    NODE_LIMIT = "NodeLimit"
    TIME_LIMIT = "TimeLimit"

    @property
    def is_limit(self) -> bool:
        return self in (SolveStatus.GAP_LIMIT, SolveStatus.NODE_LIMIT, SolveStatus.TIME_LIMIT)


class BranchingRule(Enum):
    MOST_FRACTIONAL = "most-fractional"
    PSEUDO_COST = "pseudo-cost"


class NodeSelection(Enum):
    BEST_BOUND = "best-bound"
    DEPTH_FIRST = "depth-first"


@dataclass
class SolverOptions:
    """Branch-and-bound and simplex settings."""
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    rel_gap: float = 1e-6
    gap_limit: Optional[float] = None
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    branching: BranchingRule = BranchingRule.MOST_FRACTIONAL
    node_selection: NodeSelection = NodeSelection.BEST_BOUND

    def validate(self) -> None:
        for name in ("int_tol", "feas_tol", "rel_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gap_limit is not None and not self.gap_limit > 0:
            raise ValueError(f"gap_limit must be positive, got {self.gap_limit}")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError(f"node_limit must be at least 1, got {self.node_limit}")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError(f"time_limit must be positive, got {self.time_limit}")

    @property
    def stop_gap(self) -> float:
        """Relative gap at which the search stops."""
        if self.gap_limit is None:
            return self.rel_gap
        return max(self.gap_limit, self.rel_gap)

    def to_dict(self) -> Dict:
        return {
            "int_tol": self.int_tol,
            "feas_tol": self.feas_tol,
            "rel_gap": self.rel_gap,
            "gap_limit": self.gap_limit,
            "node_limit": self.node_limit,
            "time_limit": self.time_limit,
            "branching": self.branching.value,
            "node_selection": self.node_selection.value,
        }


@dataclass
class Solution:
    """Outcome of an LP or MILP solve; objective and bound are in the model's own sense."""
    status: SolveStatus
    objective: Optional[float] = None
    x: Optional[np.ndarray] = field(default=None, repr=False)
    bound: Optional[float] = None
    gap: float = INF
    nodes: int = 0
    iterations: int = 0
    wall_time: float = 0.0
    row_duals: Optional[np.ndarray] = field(default=None, repr=False)
    bound_history: List[float] = field(default_factory=list, repr=False)
    incumbent_history: List[float] = field(default_factory=list, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    @property
    def has_solution(self) -> bool:
        return self.x is not None

    def value(self, index: int) -> float:
        if self.x is None:
            raise ValueError(f"no assignment available (status {self.status.value})")
        return float(self.x[index])

    def values(self, indices: Iterable[int]) -> np.ndarray:
        if self.x is None:
            raise ValueError(f"no assignment available (status {self.status.value})")
        return self.x[np.asarray(list(indices), dtype=np.int64)]

    def to_dict(self) -> Dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap if np.isfinite(self.gap) else None,
            "nodes": self.nodes,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
        }


__all__ = [
    "INF",
    "VarType",
    "RowSense",
    "ObjSense",
    "Variable",
    "Row",
    "ModelArrays",
    "MilpModel",
    "SolveStatus",
    "BranchingRule",
    "NodeSelection",
    "SolverOptions",
    "Solution",
]
