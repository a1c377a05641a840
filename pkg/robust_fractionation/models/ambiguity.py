"""
Ambiguity Set Model.
Time grid, moment bounds, density envelopes and confidence sets describing the family of
probability measures one dual block protects against.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import (
    EmptyAmbiguity,
    GridTooSmall,
    InvalidMoments,
    NonDivisibleSpan,
    NonPositiveStep,
)
from ..utils.calculations import (
    normal_density,
    normal_density_lipschitz,
    peak_density,
    step_count,
)

logger = logging.getLogger(__name__)

# Samples per bin when maximizing a tabulated envelope
TABULATED_SAMPLES = 32

# Slack on the total mass cap before the ambiguity set is declared empty
MASS_TOLERANCE = 1e-12


# =============================================================================
# Domain types
# =============================================================================

@dataclass(frozen=True)
class TimeGrid:
    """Equally spaced grid t0, t0 + delta, ..., t_max."""
    t0: float
    t_max: float
    delta: float
    points: np.ndarray = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.points)

    def index_of(self, t: float) -> int:
        """Grid index of ``t``; raises ValueError when ``t`` is not a grid point."""
        k = int(round((t - self.t0) / self.delta))
        if k < 0 or k >= self.size or abs(self.points[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"{t} is not a point of the grid [{self.t0}, {self.t_max}] / {self.delta}")
        return k

    def bin_index(self, t: float) -> int:
        """Index of the bin [t_k, t_k + delta) holding ``t`` (last bin extends past t_max)."""
        k = int(np.floor((t - self.t0) / self.delta + 1e-9))
        return min(max(k, 0), self.size - 1)

    def bin_edge_index(self, t: float) -> int:
        """Index k with t = t0 + k*delta, allowing k = size (the right edge of the last bin)."""
        k = int(round((t - self.t0) / self.delta))
        if abs(self.t0 + k * self.delta - t) > 1e-9 * max(1.0, abs(t)) or k < 0 or k > self.size:
            raise ValueError(f"{t} is not a bin edge of the grid")
        return k


@dataclass(frozen=True)
class MomentSpec:
    """
    First and second moment bounds.

    The second-moment row reads <-t^2 + beta*t, P> >= var_rhs; beta = 2*mu in the generic
    setting and mu_minus + mu_plus in the McCormick setting.
    """
    mu_minus: float
    mu_plus: float
    beta: float
    var_rhs: float

    @classmethod
    def mccormick(cls, mu_minus: float, mu_plus: float, sigma: float, eps_sigma: float) -> "MomentSpec":
        return cls(
            mu_minus=mu_minus,
            mu_plus=mu_plus,
            beta=mu_minus + mu_plus,
            var_rhs=-eps_sigma * sigma * sigma + mu_plus * mu_minus,
        )

    def validate(self) -> None:
        if self.mu_minus > self.mu_plus:
            raise InvalidMoments(f"mu_minus={self.mu_minus} exceeds mu_plus={self.mu_plus}")
        tol = 1e-12 * max(1.0, abs(self.beta))
        if not (2 * self.mu_minus - tol <= self.beta <= 2 * self.mu_plus + tol):
            raise InvalidMoments(
                f"beta={self.beta} outside [{2 * self.mu_minus}, {2 * self.mu_plus}]"
            )


class EnvelopeKind(Enum):
    PIECEWISE_NORMAL = "piecewise-normal"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class EnvelopeFn:
    """
    Pointwise upper bound on the uncertain density.

    A piecewise-normal envelope follows N(mu_minus, sigma^2) left of mu_minus, stays at the
    peak 1/(sigma*sqrt(2*pi)) on [mu_minus, mu_plus] and follows N(mu_plus, sigma^2) to the
    right. A tabulated envelope interpolates linearly and is constant outside its table.
    """
    kind: EnvelopeKind
    mu_minus: float = 0.0
    mu_plus: float = 0.0
    sigma: float = 1.0
    table: Tuple[Tuple[float, float], ...] = ()

    @classmethod
    def piecewise_normal(cls, mu_minus: float, mu_plus: float, sigma: float) -> "EnvelopeFn":
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        if mu_minus > mu_plus:
            raise InvalidMoments(f"mu_minus={mu_minus} exceeds mu_plus={mu_plus}")
        return cls(EnvelopeKind.PIECEWISE_NORMAL, mu_minus=mu_minus, mu_plus=mu_plus, sigma=sigma)

    @classmethod
    def tabulated(cls, samples: Sequence[Tuple[float, float]]) -> "EnvelopeFn":
        table = tuple(sorted((float(t), float(v)) for t, v in samples))
        if len(table) < 1:
            raise ValueError("tabulated envelope needs at least one sample")
        if any(v < 0 for _, v in table):
            raise ValueError("tabulated envelope values must be nonnegative")
        ts = [t for t, _ in table]
        if len(set(ts)) != len(ts):
            raise ValueError("tabulated envelope has duplicate abscissae")
        return cls(EnvelopeKind.TABULATED, table=table)

    @property
    def plateau(self) -> float:
        return peak_density(self.sigma)

    def evaluate(self, t):
        """Envelope value at scalar or array ``t``."""
        ts = np.asarray(t, dtype=float)
        if self.kind is EnvelopeKind.TABULATED:
            xs = np.array([p[0] for p in self.table])
            vs = np.array([p[1] for p in self.table])
            values = np.interp(ts, xs, vs)
        else:
            values = np.where(
                ts <= self.mu_minus,
                normal_density(ts, self.mu_minus, self.sigma),
                np.where(
                    ts >= self.mu_plus,
                    normal_density(ts, self.mu_plus, self.sigma),
                    self.plateau,
                ),
            )
        if np.ndim(values) == 0:
            return float(values)
        return values

    def breakpoints(self) -> List[float]:
        if self.kind is EnvelopeKind.TABULATED:
            return [t for t, _ in self.table]
        return [self.mu_minus, self.mu_plus]

    def lipschitz(self) -> float:
        """Segmentwise Lipschitz bound of the envelope."""
        if self.kind is EnvelopeKind.PIECEWISE_NORMAL:
            return normal_density_lipschitz(self.sigma)
        if len(self.table) < 2:
            return 0.0
        xs = np.array([p[0] for p in self.table])
        vs = np.array([p[1] for p in self.table])
        return float(np.max(np.abs(np.diff(vs) / np.diff(xs))))


@dataclass(frozen=True)
class ConfidenceSet:
    """
    Probability bound on a bin-aligned interval [lo, hi).

    eps > 0 requires P([lo, hi)) >= eps; eps < 0 requires P([lo, hi)) <= -eps.
    """
    lo: float
    hi: float
    eps: float

    @property
    def sign(self) -> float:
        return 1.0 if self.eps > 0 else -1.0


@dataclass(frozen=True)
class AmbiguityBlock:
    """One species' ambiguity description on a grid."""
    grid: TimeGrid
    moments: Optional[MomentSpec]
    bin_caps: np.ndarray = field(repr=False, compare=False)
    confidence_sets: Tuple[ConfidenceSet, ...] = ()
    envelope: Optional[EnvelopeFn] = None

    @property
    def has_moments(self) -> bool:
        return self.moments is not None

    @property
    def beta(self) -> float:
        return self.moments.beta if self.moments is not None else 0.0

    def total_mass_cap(self) -> float:
        return float(self.grid.delta * np.sum(self.bin_caps))

    def confidence_bins(self, cs: ConfidenceSet) -> Tuple[int, int]:
        """Half-open bin index range [k_lo, k_hi) covered by a confidence set."""
        return self.grid.bin_edge_index(cs.lo), self.grid.bin_edge_index(cs.hi)

    def confidence_mask(self) -> np.ndarray:
        """Matrix (sets x bins) with entry sign(eps_i) on the bins inside set i."""
        mask = np.zeros((len(self.confidence_sets), self.grid.size))
        for i, cs in enumerate(self.confidence_sets):
            k_lo, k_hi = self.confidence_bins(cs)
            mask[i, k_lo:k_hi] = cs.sign
        return mask

    def with_moments(self, moments: Optional[MomentSpec]) -> "AmbiguityBlock":
        return AmbiguityBlock(self.grid, moments, self.bin_caps, self.confidence_sets, self.envelope)


@dataclass
class BlockReport:
    """Outcome of validate_block."""
    total_mass_cap: float
    bins: int
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {"total_mass_cap": self.total_mass_cap, "bins": self.bins, "flags": list(self.flags)}


# =============================================================================
# Operations
# =============================================================================

def build_grid(t0: float, t_max: float, delta: float) -> TimeGrid:
    """
    Build the grid t0 + k*delta covering [t0, t_max].

    Args:
        t0: Left end of the domain
        t_max: Right end of the domain
        delta: Step width

    Returns:
        TimeGrid whose first point is t0 and last point is t_max

    Raises:
        NonPositiveStep: delta <= 0
        GridTooSmall: t_max <= t0
        NonDivisibleSpan: (t_max - t0) / delta is not integral within 1e-9 relative tolerance
    """
    if not delta > 0:
        raise NonPositiveStep(f"grid step must be positive, got {delta}")
    if not t_max > t0:
        raise GridTooSmall(f"grid needs t_max > t0, got [{t0}, {t_max}]")
    steps, divisible = step_count(t0, t_max, delta)
    if not divisible:
        raise NonDivisibleSpan(f"span {t_max - t0} is not a multiple of {delta}")
    points = t0 + delta * np.arange(steps + 1, dtype=float)
    points[-1] = t_max
    points.setflags(write=False)
    return TimeGrid(t0=t0, t_max=t_max, delta=delta, points=points)


def bin_cap(env: EnvelopeFn, tau: float, delta: float, t_max: Optional[float] = None) -> float:
    """
    Maximum of the envelope over the bin [tau, tau + delta].

    When ``t_max`` is given the bin is clipped to it, which extends the envelope
    constantly beyond the end of the domain.
    """
    lo = tau
    hi = tau + delta
    if t_max is not None:
        hi = min(hi, max(t_max, lo))
    if env.kind is EnvelopeKind.PIECEWISE_NORMAL:
        if hi <= env.mu_minus:
            return float(env.evaluate(hi))
        if lo >= env.mu_plus:
            return float(env.evaluate(lo))
        return env.plateau
    samples = np.linspace(lo, hi, TABULATED_SAMPLES)
    inner = [b for b in env.breakpoints() if lo < b < hi]
    if inner:
        samples = np.concatenate([samples, inner])
    return float(np.max(env.evaluate(samples)))


def grid_bin_caps(env: EnvelopeFn, grid: TimeGrid) -> np.ndarray:
    """Bin caps for every grid point; vectorized for piecewise-normal envelopes."""
    if env.kind is EnvelopeKind.TABULATED:
        return np.array([bin_cap(env, t, grid.delta, grid.t_max) for t in grid.points])
    lo = grid.points
    hi = np.minimum(lo + grid.delta, grid.t_max)
    caps = np.full(grid.size, env.plateau)
    left = hi <= env.mu_minus
    right = lo >= env.mu_plus
    caps[left] = normal_density(hi[left], env.mu_minus, env.sigma)
    caps[right] = normal_density(lo[right], env.mu_plus, env.sigma)
    return caps


def build_block(
    grid: TimeGrid,
    envelope: EnvelopeFn,
    moments: Optional[MomentSpec] = None,
    confidence_sets: Sequence[ConfidenceSet] = (),
) -> AmbiguityBlock:
    """Assemble an ambiguity block from an envelope and validate it."""
    caps = grid_bin_caps(envelope, grid)
    caps.setflags(write=False)
    block = AmbiguityBlock(grid, moments, caps, tuple(confidence_sets), envelope)
    validate_block(block)
    return block


def validate_block(block: AmbiguityBlock) -> BlockReport:
    """
    Check the block invariants and the necessary conditions for a nonempty ambiguity set.

    Returns:
        BlockReport with the total mass cap and any flagged (accepted) conditions

    Raises:
        InvalidMoments: inconsistent moment bounds
        EmptyAmbiguity: the caps cannot hold a probability measure
    """
    grid = block.grid
    caps = np.asarray(block.bin_caps, dtype=float)
    if caps.shape != (grid.size,):
        raise ValueError(f"expected {grid.size} bin caps, got {caps.shape}")
    if np.any(~np.isfinite(caps)) or np.any(caps < 0):
        raise ValueError("bin caps must be finite and nonnegative")

    report = BlockReport(total_mass_cap=block.total_mass_cap(), bins=grid.size)

    if block.moments is not None:
        block.moments.validate()
        beta = block.moments.beta
        best_second = float(np.max(-grid.points ** 2 + beta * grid.points))
        if best_second < block.moments.var_rhs:
            report.flags.append(
                f"second-moment row unsatisfiable on the grid "
                f"(max {best_second:.6g} < {block.moments.var_rhs:.6g})"
            )
        if block.moments.mu_plus < grid.t0 or block.moments.mu_minus > grid.t_max:
            report.flags.append("mean window lies outside the grid domain")

    if report.total_mass_cap < 1.0 - MASS_TOLERANCE:
        raise EmptyAmbiguity(f"total mass cap {report.total_mass_cap:.6g} is below 1")

    for cs in block.confidence_sets:
        if cs.eps == 0 or abs(cs.eps) > 1:
            raise ValueError(f"confidence level must lie in [-1, 0) or (0, 1], got {cs.eps}")
        k_lo, k_hi = block.confidence_bins(cs)
        if k_hi <= k_lo:
            raise ValueError(f"confidence set [{cs.lo}, {cs.hi}) is empty")
        if cs.eps > 0:
            cap = float(grid.delta * np.sum(caps[k_lo:k_hi]))
            if cap < cs.eps - MASS_TOLERANCE:
                raise EmptyAmbiguity(
                    f"confidence set [{cs.lo}, {cs.hi}) needs mass {cs.eps} but caps allow {cap:.6g}"
                )

    for flag in report.flags:
        logger.warning(f"Ambiguity block flagged: {flag}")
    return report


__all__ = [
    "TimeGrid",
    "MomentSpec",
    "EnvelopeKind",
    "EnvelopeFn",
    "ConfidenceSet",
    "AmbiguityBlock",
    "BlockReport",
    "build_grid",
    "bin_cap",
    "grid_bin_caps",
    "build_block",
    "validate_block",
]
