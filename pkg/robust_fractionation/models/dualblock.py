"""
Dual Block Emission.
Rows of the safe MILP for one ambiguity block and one indicator height: the dual objective
row, the base and strengthened grid families, the product linearization for variable heights,
and the shared indicator encoding of the window [x_minus, x_plus].
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from ..errors import DegenerateQuadratic, GridTooSmall, UnboundedHeight
from ..solver.milp_model import INF, MilpModel, RowSense, Solution, VarType
from .ambiguity import AmbiguityBlock, TimeGrid

logger = logging.getLogger(__name__)

# y5 at or below this is treated as zero curvature
CURVATURE_TOL = 1e-12

FAMILY_OBJECTIVE = "objective-row"
FAMILY_BASE_C = "base-c"
FAMILY_BASE_D = "base-d"
FAMILY_STRONG_PLUS = "strong-plus"
FAMILY_STRONG_MINUS = "strong-minus"
FAMILY_ENCODING = "encoding"
FAMILY_LINKAGE = "linkage"
FAMILY_WINDOW = "window"


# =============================================================================
# Dual polynomial
# =============================================================================

@dataclass(frozen=True)
class QuadDual:
    """p_y(t) = -y1 + y2 + (y3 - y4) t + y5 (t^2 - beta t)."""
    y: np.ndarray
    beta: float = 0.0

    @property
    def curvature(self) -> float:
        return float(self.y[4])


def p_eval(q: QuadDual, t):
    """Evaluate the dual polynomial at scalar or array ``t``."""
    y1, y2, y3, y4, y5 = (float(v) for v in q.y)
    t = np.asarray(t, dtype=float)
    value = -y1 + y2 + (y3 - y4) * t + y5 * (t * t - q.beta * t)
    if np.ndim(value) == 0:
        return float(value)
    return value


def p_vertex(q: QuadDual) -> Optional[float]:
    """Minimizer of p_y, or None when the polynomial is affine."""
    y5 = q.curvature
    if y5 <= CURVATURE_TOL:
        return None
    return (q.beta * y5 + float(q.y[3]) - float(q.y[2])) / (2.0 * y5)


def vertex_drop(q: QuadDual, delta: float) -> float:
    """Rise of p_y one step away from its vertex, y5 * delta^2."""
    y5 = q.curvature
    if y5 <= CURVATURE_TOL:
        raise DegenerateQuadratic("vertex drop needs y5 > 0")
    return y5 * delta * delta


# =============================================================================
# Variable layout
# =============================================================================

@dataclass
class DualVars:
    """Values of one block's dual multipliers."""
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def validate(self, bins: int, tol: float = 0.0) -> None:
        if len(self.y) != 5:
            raise ValueError(f"expected 5 y multipliers, got {len(self.y)}")
        if len(self.z) != bins:
            raise ValueError(f"expected {bins} z multipliers, got {len(self.z)}")
        for label, values in (("y", self.y), ("z", self.z), ("w", self.w)):
            if len(values) and np.min(values) < -tol:
                raise ValueError(f"{label} multipliers must be nonnegative")


@dataclass
class DualColumns:
    """Model columns of one block's dual multipliers."""
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray

    def values(self, solution: Solution) -> DualVars:
        return DualVars(
            y=np.maximum(solution.values(self.y), 0.0),
            z=np.maximum(solution.values(self.z), 0.0),
            w=np.maximum(solution.values(self.w), 0.0) if len(self.w) else np.zeros(0),
        )


class HeightSign(Enum):
    POSITIVE = "+"
    NEGATIVE = "-"
    UNRESTRICTED = "unrestricted"


@dataclass(frozen=True)
class Height:
    """Indicator height: a fixed constant or a bounded model column."""
    value: Optional[float] = None
    column: Optional[int] = None
    lower: float = -INF
    upper: float = INF

    @classmethod
    def fixed(cls, value: float) -> "Height":
        return cls(value=float(value), lower=float(value), upper=float(value))

    @classmethod
    def variable(cls, column: int, lower: float, upper: float) -> "Height":
        return cls(column=column, lower=float(lower), upper=float(upper))

    @property
    def is_fixed(self) -> bool:
        return self.value is not None

    @property
    def sign(self) -> HeightSign:
        if self.lower >= 0:
            return HeightSign.POSITIVE
        if self.upper <= 0:
            return HeightSign.NEGATIVE
        return HeightSign.UNRESTRICTED


@dataclass
class BlockRows:
    """Row indices emitted for one block, grouped by family."""
    families: Dict[str, List[int]] = field(default_factory=dict)

    def add(self, family: str, row: int) -> None:
        self.families.setdefault(family, []).append(row)

    def merge(self, other: "BlockRows") -> None:
        for family, rows in other.families.items():
            self.families.setdefault(family, []).extend(rows)

    def counts(self) -> Dict[str, int]:
        return {family: len(rows) for family, rows in self.families.items()}

    @property
    def total(self) -> int:
        return sum(len(rows) for rows in self.families.values())


@dataclass
class EncodingVars:
    """Columns of the indicator encoding of [x_minus, x_plus] on a grid."""
    grid: TimeGrid
    b: np.ndarray
    delta_minus: np.ndarray
    delta_plus: np.ndarray
    x_minus: int
    x_plus: int
    rows: BlockRows = field(default_factory=BlockRows)

    def window(self, solution: Solution) -> tuple:
        """(x_minus, x_plus) snapped to the grid."""
        return (
            snap_to_grid(solution.value(self.x_minus), self.grid),
            snap_to_grid(solution.value(self.x_plus), self.grid),
        )


def snap_to_grid(t: float, grid: TimeGrid) -> float:
    k = int(round((t - grid.t0) / grid.delta))
    if 0 <= k < grid.size:
        return float(grid.points[k])
    return grid.t0 + k * grid.delta


# =============================================================================
# Dual objective
# =============================================================================

def add_dual_vars(model: MilpModel, block: AmbiguityBlock, prefix: str) -> DualColumns:
    """
    Declare y (5), z (one per bin) and w (one per confidence set), all nonnegative.

    Without moment information y3..y5 are fixed to zero so column counts stay stable.
    """
    y = np.array(
        [
            model.add_variable(f"{prefix}y{k + 1}", 0.0, INF if (k < 2 or block.has_moments) else 0.0)
            for k in range(5)
        ],
        dtype=np.int64,
    )
    z = model.add_variables(f"{prefix}z", block.grid.size, 0.0, INF)
    w = model.add_variables(f"{prefix}w", len(block.confidence_sets), 0.0, INF)
    return DualColumns(y=y, z=z, w=w)


def dual_objective_terms(block: AmbiguityBlock, cols: DualColumns) -> Dict[int, float]:
    """
    Coefficients of y1 - y2 - mu_plus y3 + mu_minus y4 + var_rhs y5 - delta sum(cap z)
    + sum(eps w).
    """
    terms: Dict[int, float] = {int(cols.y[0]): 1.0, int(cols.y[1]): -1.0}
    if block.moments is not None:
        terms[int(cols.y[2])] = -block.moments.mu_plus
        terms[int(cols.y[3])] = block.moments.mu_minus
        terms[int(cols.y[4])] = block.moments.var_rhs
    caps = np.asarray(block.bin_caps, dtype=float)
    for k, j in enumerate(cols.z):
        terms[int(j)] = -block.grid.delta * caps[k]
    for cs, j in zip(block.confidence_sets, cols.w):
        terms[int(j)] = cs.eps
    return terms


def dual_objective_value(block: AmbiguityBlock, dual: DualVars) -> float:
    """Numeric value of the dual objective for given multipliers."""
    y = dual.y
    value = y[0] - y[1]
    if block.moments is not None:
        m = block.moments
        value += -m.mu_plus * y[2] + m.mu_minus * y[3] + m.var_rhs * y[4]
    value -= block.grid.delta * float(np.dot(block.bin_caps, dual.z))
    if len(block.confidence_sets):
        value += float(np.dot([cs.eps for cs in block.confidence_sets], dual.w))
    return float(value)


def emit_dual_objective_row(
    model: MilpModel,
    block: AmbiguityBlock,
    cols: DualColumns,
    rhs: float,
    name: str = "dual_objective",
) -> int:
    """Add the row dual_objective(y, z, w) >= rhs."""
    return model.add_row(dual_objective_terms(block, cols), RowSense.GE, rhs, name, FAMILY_OBJECTIVE)


# =============================================================================
# Grid families
# =============================================================================

def _step_terms(block: AmbiguityBlock, cols: DualColumns, mask: np.ndarray, k: int) -> Dict[int, float]:
    terms = {int(cols.z[k]): 1.0}
    for i in range(mask.shape[0]):
        if mask[i, k] != 0.0:
            terms[int(cols.w[i])] = -mask[i, k]
    return terms


def _poly_terms(block: AmbiguityBlock, cols: DualColumns, t: float) -> Dict[int, float]:
    """p_y(t) - y5 delta^2 as coefficients on y."""
    beta = block.beta
    return {
        int(cols.y[0]): -1.0,
        int(cols.y[1]): 1.0,
        int(cols.y[2]): t,
        int(cols.y[3]): -t,
        int(cols.y[4]): t * t - beta * t - block.grid.delta ** 2,
    }


def _add_terms(target: Dict[int, float], terms: Dict[int, float]) -> None:
    for j, c in terms.items():
        target[j] = target.get(j, 0.0) + c


class _ProductColumns:
    """Lazily declared products height * (binary expression) for a variable height."""

    def __init__(self, model: MilpModel, height: Height, prefix: str, rows: BlockRows):
        self.model = model
        self.height = height
        self.prefix = prefix
        self.rows = rows
        self.cache: Dict[tuple, int] = {}

    def get(self, label: str, k: int, expr: Dict[int, float]) -> int:
        key = (label, k)
        if key in self.cache:
            return self.cache[key]
        lo, hi = self.height.lower, self.height.upper
        x = self.height.column
        col = self.model.add_variable(f"{self.prefix}{label}[{k}]", min(lo, 0.0), max(hi, 0.0))
        # w <= hi e ; w >= lo e ; w <= x - lo (1 - e) ; w >= x - hi (1 - e)
        specs = [
            ({col: 1.0}, {j: -hi * c for j, c in expr.items()}, RowSense.LE, 0.0),
            ({col: 1.0}, {j: -lo * c for j, c in expr.items()}, RowSense.GE, 0.0),
            ({col: 1.0, x: -1.0}, {j: -lo * c for j, c in expr.items()}, RowSense.LE, -lo),
            ({col: 1.0, x: -1.0}, {j: -hi * c for j, c in expr.items()}, RowSense.GE, -hi),
        ]
        for n, (base, extra, sense, rhs) in enumerate(specs):
            terms = dict(base)
            _add_terms(terms, extra)
            row = self.model.add_row(
                terms, sense, rhs, f"{self.prefix}link_{label}[{k}]_{n}", FAMILY_LINKAGE
            )
            self.rows.add(FAMILY_LINKAGE, row)
        self.cache[key] = col
        return col


def emit_families(
    model: MilpModel,
    block: AmbiguityBlock,
    cols: DualColumns,
    enc: EncodingVars,
    height: Height,
    prefix: str = "",
) -> BlockRows:
    """
    Emit the grid families of one block.

    Positive and unrestricted heights get the base and strengthened families, negative
    heights only the base families. A variable height enters through product columns with
    four linkage rows each.

    Args:
        model: Model receiving the rows
        block: Ambiguity block
        cols: The block's dual columns
        enc: Shared indicator encoding
        height: Indicator height
        prefix: Name prefix for rows and product columns

    Returns:
        BlockRows grouped by family

    Raises:
        UnboundedHeight: a variable height without finite bounds
    """
    if not height.is_fixed and not (np.isfinite(height.lower) and np.isfinite(height.upper)):
        raise UnboundedHeight(f"height bounds [{height.lower}, {height.upper}] are not finite")
    rows = BlockRows()
    grid = block.grid
    n = grid.size
    pts = grid.points
    mask = block.confidence_mask()
    products = None if height.is_fixed else _ProductColumns(model, height, prefix, rows)

    def height_terms(label: str, k: int, expr: Dict[int, float]) -> Dict[int, float]:
        if height.is_fixed:
            return {j: height.value * c for j, c in expr.items()}
        return {products.get(label, k, expr): 1.0}

    def add(family: str, k: int, expr_label: str, expr_k: int, expr: Dict[int, float], t: float):
        terms = height_terms(expr_label, expr_k, expr)
        _add_terms(terms, _step_terms(block, cols, mask, k))
        _add_terms(terms, _poly_terms(block, cols, t))
        row = model.add_row(terms, RowSense.GE, 0.0, f"{prefix}{family}[{k}]", family)
        rows.add(family, row)

    b, dm, dp = enc.b, enc.delta_minus, enc.delta_plus
    for k in range(n):
        add(FAMILY_BASE_C, k, "hb", k, {int(b[k]): 1.0}, pts[k])
    for k in range(n - 1):
        add(FAMILY_BASE_D, k, "hb", k + 1, {int(b[k + 1]): 1.0}, pts[k + 1])
    if height.sign is not HeightSign.NEGATIVE:
        for k in range(n):
            add(FAMILY_STRONG_PLUS, k, "hp", k, {int(b[k]): 1.0, int(dp[k]): -1.0}, pts[k])
        for k in range(n - 1):
            add(FAMILY_STRONG_MINUS, k, "hm", k, {int(b[k + 1]): 1.0, int(dm[k]): -1.0}, pts[k + 1])

    logger.debug(f"Emitted block {prefix!r}: {rows.counts()}")
    return rows


# =============================================================================
# Indicator encoding
# =============================================================================

def emit_encoding(model: MilpModel, grid: TimeGrid, prefix: str = "") -> EncodingVars:
    """
    Declare b, delta_minus, delta_plus, x_minus, x_plus and the encoding rows.

    Rows: sum of jumps <= 2; b[k+1] - b[k] = dm[k] - dp[k] (b is zero past the grid);
    x_plus - x_minus = delta (sum b - 1); x_minus = sum (t + delta) dm; x_plus = sum t dp.
    x_minus is bounded below by t0 + delta.

    Raises:
        GridTooSmall: fewer than 3 grid points
    """
    n = grid.size
    if n < 3:
        raise GridTooSmall(f"indicator encoding needs at least 3 grid points, got {n}")
    pts = grid.points
    delta = grid.delta

    b = model.add_variables(f"{prefix}b", n, 0.0, 1.0, VarType.BINARY)
    dm = model.add_variables(f"{prefix}dminus", n, 0.0, 1.0, VarType.BINARY)
    dp = model.add_variables(f"{prefix}dplus", n, 0.0, 1.0, VarType.BINARY)
    x_minus = model.add_variable(f"{prefix}x_minus", grid.t0 + delta, grid.t_max + delta)
    x_plus = model.add_variable(f"{prefix}x_plus", grid.t0, grid.t_max)
    enc = EncodingVars(grid, b, dm, dp, x_minus, x_plus)

    def add(terms, sense, rhs, name):
        enc.rows.add(FAMILY_ENCODING, model.add_row(terms, sense, rhs, f"{prefix}{name}", FAMILY_ENCODING))

    add((np.concatenate([dm, dp]), np.ones(2 * n)), RowSense.LE, 2.0, "jumps")
    for k in range(n):
        idx = [b[k], dm[k], dp[k]]
        val = [-1.0, -1.0, 1.0]
        if k + 1 < n:
            idx.append(b[k + 1])
            val.append(1.0)
        add((idx, val), RowSense.EQ, 0.0, f"jump[{k}]")
    add(
        (np.concatenate([[x_plus, x_minus], b]), np.concatenate([[1.0, -1.0], -delta * np.ones(n)])),
        RowSense.EQ,
        -delta,
        "width",
    )
    add((np.concatenate([[x_minus], dm]), np.concatenate([[1.0], -(pts + delta)])), RowSense.EQ, 0.0, "start")
    add((np.concatenate([[x_plus], dp]), np.concatenate([[1.0], -pts])), RowSense.EQ, 0.0, "end")
    return enc


def add_window_order_row(model: MilpModel, enc: EncodingVars, name: str = "window_order") -> int:
    """x_minus <= x_plus, which excludes the empty-window assignment of the encoding."""
    return model.add_row({enc.x_minus: 1.0, enc.x_plus: -1.0}, RowSense.LE, 0.0, name, FAMILY_WINDOW)


__all__ = [
    "QuadDual",
    "p_eval",
    "p_vertex",
    "vertex_drop",
    "DualVars",
    "DualColumns",
    "HeightSign",
    "Height",
    "BlockRows",
    "EncodingVars",
    "snap_to_grid",
    "add_dual_vars",
    "dual_objective_terms",
    "dual_objective_value",
    "emit_dual_objective_row",
    "emit_families",
    "emit_encoding",
    "add_window_order_row",
    "FAMILY_OBJECTIVE",
    "FAMILY_BASE_C",
    "FAMILY_BASE_D",
    "FAMILY_STRONG_PLUS",
    "FAMILY_STRONG_MINUS",
    "FAMILY_ENCODING",
    "FAMILY_LINKAGE",
    "FAMILY_WINDOW",
]
