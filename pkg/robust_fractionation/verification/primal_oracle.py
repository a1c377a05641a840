"""
Atomic Primal Oracle.
Restricts the adversary to measures supported on a refined grid and solves the resulting
finite LP; its optimum bounds the true worst case from above, so every dual-feasible
certificate must stay below it (weak-duality sandwich).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..errors import OracleInfeasible, SandwichViolation
from ..models.ambiguity import AmbiguityBlock
from ..solver.milp_model import MilpModel, ObjSense, RowSense, SolveStatus
from ..solver.simplex import solve_lp
from .sip_check import Certificate

logger = logging.getLogger(__name__)

SANDWICH_TOL = 1e-6


def atom_grid(block: AmbiguityBlock, refine: int) -> np.ndarray:
    """Atoms t0 + j * delta / refine up to t_max; atom j lies in bin j // refine."""
    if refine < 1:
        raise ValueError(f"refine must be a positive integer, got {refine}")
    grid = block.grid
    count = (grid.size - 1) * refine + 1
    atoms = grid.t0 + (grid.delta / refine) * np.arange(count, dtype=float)
    atoms[-1] = grid.t_max
    return atoms


def build_oracle_lp(
    height: float,
    x_minus: float,
    x_plus: float,
    block: AmbiguityBlock,
    refine: int = 1,
) -> MilpModel:
    """Finite LP over atom masses p_j >= 0."""
    grid = block.grid
    atoms = atom_grid(block, refine)
    bins = np.arange(len(atoms)) // refine
    j_lo = grid.index_of(x_minus) * refine
    j_hi = grid.index_of(x_plus) * refine

    model = MilpModel("primal_oracle")
    p = model.add_variables("p", len(atoms), 0.0)
    window = np.arange(j_lo, j_hi + 1)
    model.set_objective({int(p[j]): height for j in window}, ObjSense.MINIMIZE)

    ones = np.ones(len(atoms))
    model.add_row((p, ones), RowSense.EQ, 1.0, "normalization", "normalization")
    if block.moments is not None:
        m = block.moments
        model.add_row((p, atoms), RowSense.GE, m.mu_minus, "mean_lower", "moment")
        model.add_row((p, atoms), RowSense.LE, m.mu_plus, "mean_upper", "moment")
        model.add_row((p, -atoms ** 2 + m.beta * atoms), RowSense.GE, m.var_rhs, "second_moment", "moment")

    caps = np.asarray(block.bin_caps, dtype=float)
    for k in range(grid.size):
        members = p[bins == k]
        model.add_row((members, np.ones(len(members))), RowSense.LE, grid.delta * caps[k], f"cap[{k}]", "envelope")

    for i, cs in enumerate(block.confidence_sets):
        k_lo, k_hi = block.confidence_bins(cs)
        members = p[(bins >= k_lo) & (bins < k_hi)]
        model.add_row(
            (members, cs.sign * np.ones(len(members))), RowSense.GE, cs.eps, f"confidence[{i}]", "confidence"
        )
    return model


def primal_oracle(
    height: float,
    x_minus: float,
    x_plus: float,
    block: AmbiguityBlock,
    refine: int = 1,
) -> float:
    """
    Minimize height * P([x_minus, x_plus]) over atomic measures in the ambiguity set.

    Args:
        height: Indicator height
        x_minus: Window start (grid point)
        x_plus: Window end (grid point)
        block: Ambiguity block
        refine: Atoms per bin

    Returns:
        Optimal value, an upper bound on the worst case over the full ambiguity set

    Raises:
        OracleInfeasible: no atomic measure satisfies the ambiguity constraints
    """
    model = build_oracle_lp(height, x_minus, x_plus, block, refine)
    solution = solve_lp(model)
    if solution.status is SolveStatus.INFEASIBLE:
        raise OracleInfeasible(f"no atomic measure on {model.num_variables} atoms fits the ambiguity set")
    if solution.status is not SolveStatus.OPTIMAL:
        raise OracleInfeasible(f"primal oracle ended with status {solution.status.value}")
    return float(solution.objective)


@dataclass
class SandwichReport:
    """Weak-duality comparison for one certificate."""
    name: str
    dual_value: float
    primal_values: Dict[int, float]
    vacuous: bool = False

    @property
    def gap(self) -> float:
        if not self.primal_values:
            return float("inf")
        return min(self.primal_values.values()) - self.dual_value

    @property
    def gaps(self) -> List[float]:
        return [v - self.dual_value for _, v in sorted(self.primal_values.items())]

    @property
    def nonincreasing(self) -> bool:
        gaps = self.gaps
        return all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "dual_value": self.dual_value,
            "primal_values": {str(k): v for k, v in sorted(self.primal_values.items())},
            "gap": None if self.vacuous else self.gap,
            "vacuous": self.vacuous,
        }


def sandwich_check(cert: Certificate, refine=1) -> SandwichReport:
    """
    Compare the certificate's dual objective against the primal oracle.

    Args:
        cert: Certificate (expected to pass check_sip)
        refine: Atoms per bin, or a sequence of refinements whose gaps are reported

    Raises:
        SandwichViolation: dual objective exceeds a primal value by more than 1e-6
    """
    refinements = [refine] if isinstance(refine, int) else list(refine)
    dual_value = cert.dual_objective()
    report = SandwichReport(cert.name, dual_value, {})
    for r in refinements:
        try:
            primal = primal_oracle(cert.height, cert.x_minus, cert.x_plus, cert.block, r)
        except OracleInfeasible as exc:
            logger.warning(f"Sandwich[{cert.name}]: {exc}; robustness holds vacuously")
            report.vacuous = True
            return report
        if dual_value > primal + SANDWICH_TOL:
            raise SandwichViolation(
                f"{cert.name}: dual objective {dual_value:.10g} exceeds primal oracle {primal:.10g} (refine={r})"
            )
        report.primal_values[r] = primal
    logger.debug(f"Sandwich[{cert.name}]: dual={dual_value:.8g} gaps={report.gaps}")
    return report


__all__ = ["SANDWICH_TOL", "atom_grid", "build_oracle_lp", "primal_oracle", "SandwichReport", "sandwich_check"]
