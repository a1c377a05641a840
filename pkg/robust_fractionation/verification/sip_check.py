"""
Continuum Feasibility Check.
Evaluates the exact infimum over the domain of

    f(t) = height * 1[x_minus, x_plus](t) + step(bin(t)) + p_y(t)

for a solved dual block. On every open bin f is a constant plus a quadratic, so its infimum
is attained at a one-sided limit or at the vertex of p_y. At grid points the step terms take
their lowest one-sided value.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..models.ambiguity import AmbiguityBlock
from ..models.dualblock import (
    DualColumns,
    DualVars,
    EncodingVars,
    QuadDual,
    dual_objective_value,
    p_eval,
    p_vertex,
)
from ..solver.milp_model import Solution

logger = logging.getLogger(__name__)

# f may dip this far below zero before a certificate is rejected
FEASIBILITY_SLACK = 1e-9


@dataclass
class Certificate:
    """Solved assignment of one dual block."""
    name: str
    height: float
    x_minus: float
    x_plus: float
    y: np.ndarray
    z: np.ndarray
    block: AmbiguityBlock
    w: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def quad(self) -> QuadDual:
        return QuadDual(np.asarray(self.y, dtype=float), self.block.beta)

    @property
    def dual(self) -> DualVars:
        return DualVars(np.asarray(self.y, dtype=float), np.asarray(self.z, dtype=float), np.asarray(self.w, dtype=float))

    def dual_objective(self) -> float:
        return dual_objective_value(self.block, self.dual)

    def steps(self) -> np.ndarray:
        """Per-bin step z_k - sum_i sign(eps_i) w_i [bin k in set i]."""
        z = np.asarray(self.z, dtype=float)
        if not len(self.block.confidence_sets):
            return z
        return z - self.block.confidence_mask().T @ np.asarray(self.w, dtype=float)

    def validate(self) -> None:
        grid = self.block.grid
        self.dual.validate(grid.size)
        if len(self.w) != len(self.block.confidence_sets):
            raise ValueError(f"expected {len(self.block.confidence_sets)} w multipliers, got {len(self.w)}")
        grid.index_of(self.x_minus)
        grid.index_of(self.x_plus)
        if self.x_minus > self.x_plus:
            raise ValueError(f"window [{self.x_minus}, {self.x_plus}] is reversed")


@dataclass
class FeasReport:
    """Result of check_sip."""
    feasible: bool
    worst_value: float
    witness: float
    checked_points: int
    witness_kind: str = "grid"

    def to_dict(self) -> Dict:
        return {
            "feasible": self.feasible,
            "worst_value": self.worst_value,
            "witness": self.witness,
            "witness_kind": self.witness_kind,
            "checked_points": self.checked_points,
        }


def certificate_from_solution(
    name: str,
    block: AmbiguityBlock,
    height: float,
    enc: EncodingVars,
    cols: DualColumns,
    solution: Solution,
) -> Certificate:
    """Read one block's certificate out of a MILP solution."""
    x_minus, x_plus = enc.window(solution)
    dual = cols.values(solution)
    return Certificate(
        name=name,
        height=float(height),
        x_minus=x_minus,
        x_plus=x_plus,
        y=dual.y,
        z=dual.z,
        w=dual.w,
        block=block,
    )


def check_sip(cert: Certificate) -> FeasReport:
    """
    Exact infimum of the dual constraint function over the domain.

    Returns:
        FeasReport; feasible iff worst_value >= -1e-9, the witness is a grid point or the
        vertex of p_y
    """
    cert.validate()
    grid = cert.block.grid
    pts = grid.points
    n = grid.size
    a = cert.height
    q = cert.quad
    s = cert.steps()
    p = p_eval(q, pts)
    i_lo = grid.index_of(cert.x_minus)
    i_hi = grid.index_of(cert.x_plus)

    # open bins (t_k, t_k+1) for k < n - 1
    k = np.arange(n - 1)
    inside = ((k >= i_lo) & (k < i_hi)).astype(float)
    right_of = a * inside + s[:-1] + p[:-1]
    left_of = a * inside + s[:-1] + p[1:]

    # grid points with the lowest one-sided step
    kk = np.arange(n)
    closed = ((kk >= i_lo) & (kk <= i_hi)).astype(float)
    s_left = np.concatenate([s[:1], s[:-1]])
    at_point = a * closed + np.minimum(s_left, s) + p

    candidates = [
        (right_of, pts[:-1], "grid"),
        (left_of, pts[1:], "grid"),
        (at_point, pts, "grid"),
    ]
    vertex = p_vertex(q)
    if vertex is not None and pts[0] < vertex < pts[-1]:
        kv = min(int(np.searchsorted(pts, vertex, side="right")) - 1, n - 2)
        if pts[kv] < vertex < pts[kv + 1]:
            value = a * inside[kv] + s[kv] + p_eval(q, vertex)
            candidates.append((np.array([value]), np.array([vertex]), "vertex"))

    worst = np.inf
    witness = float(pts[0])
    kind = "grid"
    checked = 0
    for values, where, label in candidates:
        checked += len(values)
        if len(values) == 0:
            continue
        j = int(np.argmin(values))
        if values[j] < worst:
            worst = float(values[j])
            witness = float(where[j])
            kind = label

    report = FeasReport(
        feasible=worst >= -FEASIBILITY_SLACK,
        worst_value=worst,
        witness=witness,
        checked_points=checked,
        witness_kind=kind,
    )
    log = logger.debug if report.feasible else logger.warning
    log(f"check_sip[{cert.name}]: worst={worst:.3e} at t={witness:.6g} ({kind})")
    return report


__all__ = [
    "FEASIBILITY_SLACK",
    "Certificate",
    "FeasReport",
    "certificate_from_solution",
    "check_sip",
]
