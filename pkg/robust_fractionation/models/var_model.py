"""
Robust Value-at-Risk Model.
Finds the smallest grid threshold x_plus such that P([t0, x_plus]) >= alpha for every
measure of the ambiguity set, using the safe MILP with height 1 and the window start pinned
to t0 through a zero-capacity phantom bin.

The returned threshold dominates the alpha-quantile of every measure in the ambiguity set.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..errors import VerificationFailure
from ..solver.branch_bound import solve_milp
from ..solver.milp_model import MilpModel, ObjSense, Solution, SolverOptions, SolveStatus
from ..verification.sip_check import Certificate, FeasReport, certificate_from_solution, check_sip
from .ambiguity import AmbiguityBlock, build_grid, validate_block
from .dualblock import (
    Height,
    add_dual_vars,
    add_window_order_row,
    emit_dual_objective_row,
    emit_encoding,
    emit_families,
)

logger = logging.getLogger(__name__)


@dataclass
class VarConfig:
    alpha: float
    block: AmbiguityBlock

    def validate(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        validate_block(self.block)


@dataclass
class VarResult:
    """Robust VaR threshold with its certificate."""
    status: SolveStatus
    bound: Optional[float] = None
    certificate: Optional[Certificate] = field(default=None, repr=False)
    sip_report: Optional[FeasReport] = None
    solution: Optional[Solution] = field(default=None, repr=False)
    model_sizes: Dict[str, int] = field(default_factory=dict)
    family_counts: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "status": self.status.value,
            "bound": self.bound,
            "check_sip": self.sip_report.to_dict() if self.sip_report else None,
        }


def extend_with_phantom(block: AmbiguityBlock) -> AmbiguityBlock:
    """Prepend the grid point t0 - delta whose bin cannot hold mass."""
    grid = block.grid
    ext_grid = build_grid(grid.t0 - grid.delta, grid.t_max, grid.delta)
    caps = np.concatenate([[0.0], np.asarray(block.bin_caps, dtype=float)])
    caps.setflags(write=False)
    return AmbiguityBlock(ext_grid, block.moments, caps, block.confidence_sets, block.envelope)


def build_var_mip(cfg: VarConfig):
    """
    Assemble the VaR model on the phantom-extended grid.

    Returns:
        (model, encoding, dual columns, extended block)
    """
    cfg.validate()
    ext = extend_with_phantom(cfg.block)
    model = MilpModel("var")
    enc = emit_encoding(model, ext.grid)
    model.fix_variable(enc.x_minus, cfg.block.grid.t0)
    add_window_order_row(model, enc)
    cols = add_dual_vars(model, ext, "")
    emit_families(model, ext, cols, enc, Height.fixed(1.0))
    emit_dual_objective_row(model, ext, cols, cfg.alpha)
    model.set_objective({enc.x_plus: 1.0}, ObjSense.MINIMIZE)
    logger.info(f"Built VaR model: alpha={cfg.alpha}, {model.num_variables} variables, {model.num_rows} rows")
    return model, enc, cols, ext


def solve_var(cfg: VarConfig, opts: Optional[SolverOptions] = None) -> VarResult:
    """
    Solve the robust VaR model and verify its certificate.

    Returns:
        VarResult; status Infeasible when no threshold in the domain reaches coverage alpha

    Raises:
        VerificationFailure: the certificate fails the continuum check
    """
    model, enc, cols, ext = build_var_mip(cfg)
    solution = solve_milp(model, opts)
    result = VarResult(
        status=solution.status,
        solution=solution,
        model_sizes=model.size_summary(),
        family_counts=model.family_counts(),
    )
    if not solution.has_solution:
        logger.info(f"No robust VaR threshold: {solution.status.value}")
        return result

    cert = certificate_from_solution("var", ext, 1.0, enc, cols, solution)
    result.bound = cert.x_plus
    result.certificate = cert
    result.sip_report = check_sip(cert)
    if not result.sip_report.feasible:
        raise VerificationFailure(f"VaR certificate fails the continuum check: {result.sip_report}")
    logger.info(f"Robust VaR bound at alpha={cfg.alpha}: {result.bound:.6g} ({solution.status.value})")
    return result


__all__ = ["VarConfig", "VarResult", "extend_with_phantom", "build_var_mip", "solve_var"]
