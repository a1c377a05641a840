"""
Generic Single-Block Model.
Solves  max c^T (x, x_minus, x_plus)  over a user polytope P subject to one robust indicator
constraint  b <= min_P E[a(x) * 1[x_minus, x_plus](t)],  with the height a(x) either a
constant or an affine function of x. Variable heights get bounds from two LPs over P.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import UnboundedHeight, VerificationFailure
from ..solver.branch_bound import solve_milp
from ..solver.milp_model import MilpModel, ObjSense, RowSense, Solution, SolverOptions, SolveStatus
from ..solver.simplex import solve_lp
from ..verification.sip_check import Certificate, FeasReport, certificate_from_solution, check_sip
from .ambiguity import AmbiguityBlock, validate_block
from .dualblock import (
    EncodingVars,
    Height,
    add_dual_vars,
    add_window_order_row,
    emit_dual_objective_row,
    emit_encoding,
    emit_families,
)

logger = logging.getLogger(__name__)

FAMILY_POLYTOPE = "polytope"
FAMILY_HEIGHT = "height"

SENSES = {"<=": RowSense.LE, ">=": RowSense.GE, "=": RowSense.EQ}
WINDOW_NAMES = ("x_minus", "x_plus")


@dataclass
class LinearRow:
    """User row  sum coefs[name] * var  (sense)  rhs  with names x[i], x_minus, x_plus."""
    coefs: Dict[str, float]
    sense: str
    rhs: float

    def validate(self) -> None:
        if self.sense not in SENSES:
            raise ValueError(f"row sense must be one of {sorted(SENSES)}, got {self.sense!r}")


@dataclass
class GenericConfig:
    block: AmbiguityBlock
    rhs: float
    x_lower: List[float] = field(default_factory=list)
    x_upper: List[float] = field(default_factory=list)
    rows: List[LinearRow] = field(default_factory=list)
    objective: Dict[str, float] = field(default_factory=dict)
    maximize: bool = True
    height: float = 1.0
    height_terms: Optional[Dict[str, float]] = None

    @property
    def num_x(self) -> int:
        return len(self.x_lower)

    @property
    def variable_height(self) -> bool:
        return bool(self.height_terms)

    def names(self) -> List[str]:
        return [f"x[{i}]" for i in range(self.num_x)] + list(WINDOW_NAMES)

    def validate(self) -> None:
        if len(self.x_lower) != len(self.x_upper):
            raise ValueError(f"x_lower has {len(self.x_lower)} entries, x_upper {len(self.x_upper)}")
        for i, (lo, hi) in enumerate(zip(self.x_lower, self.x_upper)):
            if lo > hi:
                raise ValueError(f"x[{i}]: lower bound {lo} exceeds upper bound {hi}")
        known = set(self.names())
        for label, coefs in [("objective", self.objective), ("height_terms", self.height_terms or {})]:
            unknown = sorted(set(coefs) - known)
            if unknown:
                raise ValueError(f"{label} references unknown variables {unknown}")
        for k, row in enumerate(self.rows):
            row.validate()
            unknown = sorted(set(row.coefs) - known)
            if unknown:
                raise ValueError(f"row {k} references unknown variables {unknown}")
        validate_block(self.block)


@dataclass
class GenericResult:
    status: SolveStatus
    objective: Optional[float] = None
    x: Optional[np.ndarray] = None
    x_minus: Optional[float] = None
    x_plus: Optional[float] = None
    height: Optional[float] = None
    height_bounds: Optional[Tuple[float, float]] = None
    certificate: Optional[Certificate] = field(default=None, repr=False)
    sip_report: Optional[FeasReport] = None
    solution: Optional[Solution] = field(default=None, repr=False)
    model_sizes: Dict[str, int] = field(default_factory=dict)
    family_counts: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "x": None if self.x is None else [float(v) for v in self.x],
            "x_minus": self.x_minus,
            "x_plus": self.x_plus,
            "height": self.height,
            "height_bounds": None if self.height_bounds is None else list(self.height_bounds),
            "check_sip": self.sip_report.to_dict() if self.sip_report else None,
        }


# =============================================================================
# Polytope
# =============================================================================

def _emit_polytope(model: MilpModel, cfg: GenericConfig, x_minus: int, x_plus: int) -> Dict[str, int]:
    """Declare x, add the user rows and return the name -> column map."""
    columns = {
        f"x[{i}]": model.add_variable(f"x[{i}]", lo, hi)
        for i, (lo, hi) in enumerate(zip(cfg.x_lower, cfg.x_upper))
    }
    columns["x_minus"] = x_minus
    columns["x_plus"] = x_plus
    for k, row in enumerate(cfg.rows):
        terms = {columns[name]: float(c) for name, c in row.coefs.items()}
        model.add_row(terms, SENSES[row.sense], row.rhs, f"poly[{k}]", FAMILY_POLYTOPE)
    return columns


def _height_expression(cfg: GenericConfig, columns: Dict[str, int]) -> Dict[int, float]:
    return {columns[name]: float(c) for name, c in (cfg.height_terms or {}).items()}


def height_bounds(cfg: GenericConfig) -> Optional[Tuple[float, float]]:
    """
    Bounds of the affine height over the LP relaxation of P.

    Returns:
        (lower, upper), or None when P is empty

    Raises:
        UnboundedHeight: the height is unbounded over P
    """
    grid = cfg.block.grid
    relax = MilpModel("height_bounds")
    x_minus = relax.add_variable("x_minus", grid.t0 + grid.delta, grid.t_max + grid.delta)
    x_plus = relax.add_variable("x_plus", grid.t0, grid.t_max)
    relax.add_row({x_minus: 1.0, x_plus: -1.0}, RowSense.LE, 0.0, "window_order", FAMILY_POLYTOPE)
    columns = _emit_polytope(relax, cfg, x_minus, x_plus)
    expr = _height_expression(cfg, columns)

    values = []
    for sense in (ObjSense.MINIMIZE, ObjSense.MAXIMIZE):
        relax.set_objective(expr, sense)
        solution = solve_lp(relax)
        if solution.status is SolveStatus.INFEASIBLE:
            return None
        if solution.status is not SolveStatus.OPTIMAL:
            raise UnboundedHeight(f"height is unbounded over the polytope ({sense.value})")
        values.append(cfg.height + solution.objective)
    logger.debug(f"Height bounds over P: [{values[0]:.6g}, {values[1]:.6g}]")
    return values[0], values[1]


# =============================================================================
# Model assembly and solve
# =============================================================================

@dataclass
class GenericMip:
    model: MilpModel
    encoding: EncodingVars
    columns: Dict[str, int]
    dual_columns: object
    height: Height


def build_generic_mip(cfg: GenericConfig, bounds: Optional[Tuple[float, float]] = None) -> GenericMip:
    """
    Assemble the single-block MILP.

    Args:
        cfg: Problem configuration
        bounds: Height bounds for a variable height (derived from P when omitted)

    Raises:
        UnboundedHeight: a variable height has no finite bounds over P
    """
    cfg.validate()
    block = cfg.block
    model = MilpModel("generic")
    enc = emit_encoding(model, block.grid)
    add_window_order_row(model, enc)
    columns = _emit_polytope(model, cfg, enc.x_minus, enc.x_plus)

    if cfg.variable_height:
        if bounds is None:
            bounds = height_bounds(cfg)
        if bounds is None:
            # P is empty; any finite box keeps the model well formed
            bounds = (cfg.height, cfg.height)
        h = model.add_variable("height", bounds[0], bounds[1])
        terms = {h: 1.0}
        for j, c in _height_expression(cfg, columns).items():
            terms[j] = terms.get(j, 0.0) - c
        model.add_row(terms, RowSense.EQ, cfg.height, "height_def", FAMILY_HEIGHT)
        height = Height.variable(h, bounds[0], bounds[1])
    else:
        height = Height.fixed(cfg.height)

    cols = add_dual_vars(model, block, "")
    emit_families(model, block, cols, enc, height)
    emit_dual_objective_row(model, block, cols, cfg.rhs)
    sense = ObjSense.MAXIMIZE if cfg.maximize else ObjSense.MINIMIZE
    model.set_objective({columns[name]: float(c) for name, c in cfg.objective.items()}, sense)
    logger.info(
        f"Built generic model: {model.num_variables} variables, {model.num_rows} rows, "
        f"height={'variable' if cfg.variable_height else cfg.height}"
    )
    return GenericMip(model, enc, columns, cols, height)


def solve_generic(cfg: GenericConfig, opts: Optional[SolverOptions] = None) -> GenericResult:
    """
    Build, solve and verify the single-block model.

    Raises:
        UnboundedHeight: a variable height has no finite bounds over P
        VerificationFailure: the certificate fails the continuum check
    """
    bounds = height_bounds(cfg) if cfg.variable_height else None
    if cfg.variable_height and bounds is None:
        logger.info("Polytope is empty")
        return GenericResult(status=SolveStatus.INFEASIBLE)

    mip = build_generic_mip(cfg, bounds)
    solution = solve_milp(mip.model, opts)
    result = GenericResult(
        status=solution.status,
        height_bounds=bounds,
        solution=solution,
        model_sizes=mip.model.size_summary(),
        family_counts=mip.model.family_counts(),
    )
    if not solution.has_solution:
        logger.info(f"Generic model: {solution.status.value}")
        return result

    height = mip.height.value if mip.height.is_fixed else solution.value(mip.height.column)
    result.objective = solution.objective
    result.x = solution.values([mip.columns[f"x[{i}]"] for i in range(cfg.num_x)])
    result.height = float(height)
    cert = certificate_from_solution("generic", cfg.block, height, mip.encoding, mip.dual_columns, solution)
    result.x_minus, result.x_plus = cert.x_minus, cert.x_plus
    result.certificate = cert
    result.sip_report = check_sip(cert)
    if not result.sip_report.feasible:
        raise VerificationFailure(f"generic certificate fails the continuum check: {result.sip_report}")
    logger.info(
        f"Generic model {solution.status.value}: objective={result.objective:.6g}, "
        f"window=[{result.x_minus:.6g}, {result.x_plus:.6g}]"
    )
    return result


__all__ = [
    "LinearRow",
    "GenericConfig",
    "GenericResult",
    "GenericMip",
    "height_bounds",
    "build_generic_mip",
    "solve_generic",
]
