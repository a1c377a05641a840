"""
Robust Fractionation Model.
Builds the multi-species chromatography MILP (one shared window encoding, one dual block per
species, one aggregated purity row), solves it, verifies every species block and produces
chromatogram data.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..data.peg_separation import (
    DEFAULT_EPS_MU,
    DESIRED_SPECIES,
    EPS_SIGMA,
    GRID_DELTA,
    GRID_T0,
    GRID_T_MAX,
    NOMINAL_RETENTION,
    NTP,
    REQUIRED_PURITY,
    RETENTION_BOUNDS,
    SPECIES,
)
from ..errors import OracleInfeasible, VerificationFailure
from ..solver.branch_bound import solve_milp
from ..solver.milp_model import MilpModel, ObjSense, RowSense, Solution, SolverOptions, SolveStatus
from ..utils.calculations import normal_density
from ..verification.primal_oracle import primal_oracle
from ..verification.sip_check import Certificate, FeasReport, certificate_from_solution, check_sip
from .ambiguity import AmbiguityBlock, EnvelopeFn, MomentSpec, TimeGrid, build_block, build_grid
from .dualblock import (
    DualColumns,
    EncodingVars,
    Height,
    add_dual_vars,
    dual_objective_terms,
    dual_objective_value,
    emit_encoding,
    emit_families,
)

logger = logging.getLogger(__name__)

FAMILY_PURITY = "purity"


@dataclass
class SpeciesSpec:
    """One component of the feed."""
    s: int
    mu: float
    mu_minus: float
    mu_plus: float
    sigma: float
    q0: float
    desired: bool = False

    def validate(self) -> None:
        if not self.mu_minus <= self.mu <= self.mu_plus:
            raise ValueError(
                f"species {self.s}: retention bounds [{self.mu_minus}, {self.mu_plus}] must contain mu={self.mu}"
            )
        if not self.sigma > 0:
            raise ValueError(f"species {self.s}: sigma must be positive, got {self.sigma}")
        if self.q0 < 0:
            raise ValueError(f"species {self.s}: q0 must be nonnegative, got {self.q0}")


@dataclass
class ChromaConfig:
    """Fractionation problem settings."""
    species: List[SpeciesSpec]
    purity: float = REQUIRED_PURITY
    eps_sigma: float = EPS_SIGMA
    t0: float = GRID_T0
    t_max: float = GRID_T_MAX
    delta: float = GRID_DELTA
    moment_control: bool = True

    @classmethod
    def reference(
        cls,
        eps_mu: float = DEFAULT_EPS_MU,
        moment_control: bool = True,
        delta: float = GRID_DELTA,
        t0: float = GRID_T0,
        t_max: float = GRID_T_MAX,
        q0: Optional[Dict[int, float]] = None,
        purity: float = REQUIRED_PURITY,
        ntp: float = NTP,
        eps_sigma: float = EPS_SIGMA,
    ) -> "ChromaConfig":
        """PEG separation setup for one tabulated retention-time uncertainty level."""
        if eps_mu not in RETENTION_BOUNDS:
            raise ValueError(f"no retention bounds tabulated for eps_mu={eps_mu}")
        bounds = RETENTION_BOUNDS[eps_mu]
        weights = q0 or {s: 1.0 / len(SPECIES) for s in SPECIES}
        species = [
            SpeciesSpec(
                s=s,
                mu=NOMINAL_RETENTION[s],
                mu_minus=bounds[s][0],
                mu_plus=bounds[s][1],
                sigma=sigma_from_ntp(NOMINAL_RETENTION[s], ntp),
                q0=weights[s],
                desired=s in DESIRED_SPECIES,
            )
            for s in SPECIES
        ]
        return cls(species, purity, eps_sigma, t0, t_max, delta, moment_control)

    def validate(self) -> None:
        if not 0 < self.purity < 1:
            raise ValueError(f"purity must lie in (0, 1), got {self.purity}")
        if self.eps_sigma < 0:
            raise ValueError(f"eps_sigma must be nonnegative, got {self.eps_sigma}")
        if not self.species:
            raise ValueError("at least one species is required")
        if not any(sp.desired for sp in self.species):
            raise ValueError("at least one species must be desired")
        for sp in self.species:
            sp.validate()
        if sum(sp.q0 for sp in self.species) <= 0:
            raise ValueError("initial mass fractions sum to zero")

    def grid(self) -> TimeGrid:
        return build_grid(self.t0, self.t_max, self.delta)

    def mass_fractions(self) -> Dict[int, float]:
        """q0 normalized to sum to one."""
        total = sum(sp.q0 for sp in self.species)
        return {sp.s: sp.q0 / total for sp in self.species}

    def heights(self) -> Dict[int, float]:
        """Indicator height (1[desired] - R) * q0 per species."""
        q0 = self.mass_fractions()
        return {sp.s: ((1.0 if sp.desired else 0.0) - self.purity) * q0[sp.s] for sp in self.species}


# =============================================================================
# Species-level building blocks
# =============================================================================

def sigma_from_ntp(mu: float, ntp: float) -> float:
    """Peak width mu / sqrt(NTP)."""
    if mu <= 0 or ntp <= 0:
        raise ValueError(f"mu and ntp must be positive, got mu={mu}, ntp={ntp}")
    return mu / math.sqrt(ntp)


def mccormick_variance_row(species: SpeciesSpec, eps_sigma: float) -> MomentSpec:
    """Moment bounds with the McCormick second-moment row for uncertain retention time."""
    return MomentSpec.mccormick(species.mu_minus, species.mu_plus, species.sigma, eps_sigma)


def build_envelope(species: SpeciesSpec) -> EnvelopeFn:
    return EnvelopeFn.piecewise_normal(species.mu_minus, species.mu_plus, species.sigma)


def build_species_block(species: SpeciesSpec, grid: TimeGrid, eps_sigma: float, moment_control: bool) -> AmbiguityBlock:
    moments = mccormick_variance_row(species, eps_sigma) if moment_control else None
    return build_block(grid, build_envelope(species), moments)


# =============================================================================
# Model assembly
# =============================================================================

@dataclass
class ChromaMip:
    """Assembled fractionation model with handles to its parts."""
    model: MilpModel
    encoding: EncodingVars
    blocks: Dict[int, AmbiguityBlock]
    columns: Dict[int, DualColumns]
    heights: Dict[int, float]
    purity_row: int

    def size_summary(self) -> Dict[str, int]:
        return self.model.size_summary()


def build_chroma_mip(cfg: ChromaConfig) -> ChromaMip:
    """
    Assemble the safe fractionation MILP.

    Desired species (positive height) emit base and strengthened families, the others base
    families only. The per-species dual objectives are summed into one purity row >= 0 and
    the objective maximizes x_plus - x_minus.
    """
    cfg.validate()
    grid = cfg.grid()
    heights = cfg.heights()
    model = MilpModel("chroma")
    enc = emit_encoding(model, grid)

    blocks: Dict[int, AmbiguityBlock] = {}
    columns: Dict[int, DualColumns] = {}
    purity_terms: Dict[int, float] = {}
    for sp in cfg.species:
        block = build_species_block(sp, grid, cfg.eps_sigma, cfg.moment_control)
        prefix = f"s{sp.s}_"
        cols = add_dual_vars(model, block, prefix)
        emit_families(model, block, cols, enc, Height.fixed(heights[sp.s]), prefix)
        for j, c in dual_objective_terms(block, cols).items():
            purity_terms[j] = purity_terms.get(j, 0.0) + c
        blocks[sp.s] = block
        columns[sp.s] = cols

    purity_row = model.add_row(purity_terms, RowSense.GE, 0.0, "purity", FAMILY_PURITY)
    model.set_objective({enc.x_plus: 1.0, enc.x_minus: -1.0}, ObjSense.MAXIMIZE)
    logger.info(
        f"Built chroma model: grid={grid.size} points, {model.num_variables} variables, "
        f"{model.num_rows} rows, moment_control={cfg.moment_control}"
    )
    return ChromaMip(model, enc, blocks, columns, heights, purity_row)


# =============================================================================
# Solve and verify
# =============================================================================

@dataclass
class FractionationPlan:
    """Robust fractionation window and its certificates."""
    status: SolveStatus
    x_minus: Optional[float] = None
    x_plus: Optional[float] = None
    objective: Optional[float] = None
    dual_objectives: Dict[int, float] = field(default_factory=dict)
    certificates: List[Certificate] = field(default_factory=list, repr=False)
    sip_reports: Dict[int, FeasReport] = field(default_factory=dict, repr=False)
    solution: Optional[Solution] = field(default=None, repr=False)
    model_sizes: Dict[str, int] = field(default_factory=dict)
    family_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def purity_slack(self) -> float:
        return float(sum(self.dual_objectives.values()))

    def to_dict(self) -> Dict:
        return {
            "status": self.status.value,
            "x_minus": self.x_minus,
            "x_plus": self.x_plus,
            "objective": self.objective,
            "dual_objectives": {str(s): d for s, d in self.dual_objectives.items()},
            "purity_slack": self.purity_slack if self.dual_objectives else None,
            "check_sip": {str(s): r.to_dict() for s, r in self.sip_reports.items()},
        }


def solve_fractionation(cfg: ChromaConfig, opts: Optional[SolverOptions] = None) -> FractionationPlan:
    """
    Build, solve and verify the fractionation model.

    Returns:
        FractionationPlan; status Infeasible when no robust window reaches the purity

    Raises:
        VerificationFailure: a species block fails the continuum check
    """
    mip = build_chroma_mip(cfg)
    solution = solve_milp(mip.model, opts)
    plan = FractionationPlan(
        status=solution.status,
        solution=solution,
        model_sizes=mip.size_summary(),
        family_counts=mip.model.family_counts(),
    )
    if not solution.has_solution:
        logger.info(f"No fractionation window: {solution.status.value}")
        return plan

    x_minus, x_plus = mip.encoding.window(solution)
    if x_plus < x_minus:
        logger.warning("Only the empty window satisfies the purity row; reporting Infeasible")
        plan.status = SolveStatus.INFEASIBLE
        return plan

    plan.x_minus, plan.x_plus = x_minus, x_plus
    plan.objective = x_plus - x_minus
    for sp in cfg.species:
        cert = certificate_from_solution(
            f"species_{sp.s}", mip.blocks[sp.s], mip.heights[sp.s], mip.encoding, mip.columns[sp.s], solution
        )
        plan.certificates.append(cert)
        plan.dual_objectives[sp.s] = dual_objective_value(cert.block, cert.dual)
        plan.sip_reports[sp.s] = check_sip(cert)

    failed = [s for s, r in plan.sip_reports.items() if not r.feasible]
    if failed:
        raise VerificationFailure(f"continuum check failed for species {failed}")
    logger.info(
        f"Fractionation window [{x_minus:.4f}, {x_plus:.4f}] width {plan.objective:.4f} min "
        f"({plan.status.value})"
    )
    return plan


def purity_certificate(plan: FractionationPlan, refine: int = 2) -> Optional[float]:
    """
    Sum over species of the atomic adversary's value height_s * P_s([x_minus, x_plus]).

    By weak duality it is at least the sum of the dual objectives, hence nonnegative for a
    verified plan. Returns None when some species' atomic ambiguity set is empty.
    """
    total = 0.0
    for cert in plan.certificates:
        try:
            total += primal_oracle(cert.height, cert.x_minus, cert.x_plus, cert.block, refine)
        except OracleInfeasible as exc:
            logger.warning(f"Purity certificate unavailable for {cert.name}: {exc}")
            return None
    return total


def chromatogram_frame(cfg: ChromaConfig, plan: FractionationPlan) -> pd.DataFrame:
    """Envelope and nominal density per species on the grid plus the window indicator."""
    grid = cfg.grid()
    pts = grid.points
    data = {"t": pts}
    for sp in cfg.species:
        data[f"envelope_s{sp.s}"] = build_envelope(sp).evaluate(pts)
        data[f"density_s{sp.s}"] = normal_density(pts, sp.mu, sp.sigma)
    if plan.x_minus is not None and plan.x_plus is not None:
        tol = 1e-9 * max(1.0, abs(plan.x_plus))
        window = (pts >= plan.x_minus - tol) & (pts <= plan.x_plus + tol)
    else:
        window = np.zeros(len(pts), dtype=bool)
    data["window"] = window.astype(int)
    return pd.DataFrame(data)


__all__ = [
    "FAMILY_PURITY",
    "SpeciesSpec",
    "ChromaConfig",
    "ChromaMip",
    "FractionationPlan",
    "sigma_from_ntp",
    "mccormick_variance_row",
    "build_envelope",
    "build_species_block",
    "build_chroma_mip",
    "solve_fractionation",
    "purity_certificate",
    "chromatogram_frame",
]
