"""
Bounded-variable revised primal simplex.

The model min c.x s.t. row_lower <= A x <= row_upper, lower <= x <= upper is solved in the
internal form [A, -I] (x, r) = 0 where the row activities r carry the row bounds. The basis
is factorized with SuperLU and updated in product form between refactorizations. Phase 1
minimizes the sum of infeasibilities from any starting basis, so warm starts from a parent
node work after bound changes.
"""

import logging
import time
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import NumericalFailure
from .milp_model import MilpModel, ModelArrays, Solution, SolveStatus

logger = logging.getLogger(__name__)

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-7
HARRIS_TOL = 5e-10
CERTIFY_TOL = 1e-7
# Entries of B^-1 a below this are rounding noise
ZERO_TOL = 1e-12
# Pivots smaller than this are recomputed on a fresh factorization before use
SMALL_PIVOT = 1e-5

REFACTOR_INTERVAL = 64
STALL_LIMIT = 50
MAX_REPAIRS = 3


class VarStatus(IntEnum):
    BASIC = 0
    AT_LOWER = 1
    AT_UPPER = 2
    FREE_ZERO = 3


@dataclass
class LpBasis:
    """Basic variable per row position plus a status for every variable (structural then row)."""
    basic: np.ndarray
    status: np.ndarray

    def copy(self) -> "LpBasis":
        return LpBasis(self.basic.copy(), self.status.copy())


@dataclass
class LpResult:
    """Raw simplex outcome in minimization form."""
    status: SolveStatus
    objective: Optional[float] = None
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    basis: Optional[LpBasis] = None
    iterations: int = 0


class BoundedSimplex:
    """
    Reusable simplex for one constraint matrix; bounds can change between solves.

    Args:
        arrays: Matrix form of the model (integrality is ignored)
    """

    def __init__(self, arrays: ModelArrays):
        self.arrays = arrays
        self.m = arrays.num_rows
        self.n = arrays.num_cols
        self.ntot = self.n + self.m
        if self.m:
            full = sp.hstack([arrays.A.tocsc(), -sp.identity(self.m, format="csc")], format="csc")
            full.sort_indices()
        else:
            full = sp.csc_matrix((0, self.n))
        self.A_full = full
        self.AT = full.T.tocsr()
        self.cost = np.concatenate([arrays.cost, np.zeros(self.m)])

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        start, end = self.A_full.indptr[j], self.A_full.indptr[j + 1]
        col[self.A_full.indices[start:end]] = self.A_full.data[start:end]
        return col

    def full_bounds(
        self, lower: Optional[np.ndarray] = None, upper: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        lo = self.arrays.lower if lower is None else lower
        up = self.arrays.upper if upper is None else upper
        return (
            np.concatenate([lo, self.arrays.row_lower]).astype(float),
            np.concatenate([up, self.arrays.row_upper]).astype(float),
        )

    def slack_basis(self) -> LpBasis:
        basic = np.arange(self.n, self.ntot, dtype=np.int64)
        status = np.full(self.ntot, int(VarStatus.AT_LOWER), dtype=np.int8)
        status[basic] = int(VarStatus.BASIC)
        return LpBasis(basic, status)

    def solve(
        self,
        lower: Optional[np.ndarray] = None,
        upper: Optional[np.ndarray] = None,
        basis: Optional[LpBasis] = None,
        bland: bool = False,
        deadline: Optional[float] = None,
    ) -> LpResult:
        """
        Solve with the given structural bounds.

        Raises:
            NumericalFailure: singular basis or a certification failure
        """
        lo, up = self.full_bounds(lower, upper)
        if np.any(lo > up + PRIMAL_TOL):
            return LpResult(SolveStatus.INFEASIBLE)
        if self.m == 0:
            return self._solve_bounds_only(lo, up)
        start = basis.copy() if basis is not None else self.slack_basis()
        run = _SimplexRun(self, lo, up, start, bland, deadline)
        return run.run()

    def _solve_bounds_only(self, lo: np.ndarray, up: np.ndarray) -> LpResult:
        c = self.cost
        resting = np.where(np.isfinite(lo), lo, np.where(np.isfinite(up), up, 0.0))
        x = np.where(c > 0, lo, np.where(c < 0, up, resting))
        if not np.all(np.isfinite(x)):
            return LpResult(SolveStatus.UNBOUNDED)
        status = np.where(
            x == lo, int(VarStatus.AT_LOWER), np.where(x == up, int(VarStatus.AT_UPPER), int(VarStatus.FREE_ZERO))
        ).astype(np.int8)
        return LpResult(
            SolveStatus.OPTIMAL,
            objective=float(np.dot(c, x)),
            x=x,
            duals=np.zeros(0),
            basis=LpBasis(np.zeros(0, dtype=np.int64), status),
        )


class _SimplexRun:
    """State of a single simplex solve."""

    def __init__(
        self,
        lp: BoundedSimplex,
        lo: np.ndarray,
        up: np.ndarray,
        basis: LpBasis,
        bland: bool,
        deadline: Optional[float],
    ):
        self.lp = lp
        self.lo = lo
        self.up = up
        self.basic = basis.basic.astype(np.int64)
        self.status = basis.status.astype(np.int8)
        self.force_bland = bland
        self.deadline = deadline
        self.max_iterations = 1000 + 50 * lp.ntot
        self.iterations = 0
        self.repairs = 0
        self.box_bounded = bool(np.all(np.isfinite(lo[: lp.n])) and np.all(np.isfinite(up[: lp.n])))
        self.x = np.zeros(lp.ntot)
        self.lu = None
        self.etas: List[Tuple[int, np.ndarray]] = []
        self._place_nonbasic()

    # =========================================================================
    # Linear algebra
    # =========================================================================

    def _place_nonbasic(self) -> None:
        st = self.status
        nb = st != VarStatus.BASIC
        lo_f = np.isfinite(self.lo)
        up_f = np.isfinite(self.up)

        bad = nb & (st == VarStatus.AT_LOWER) & ~lo_f
        st[bad & up_f] = VarStatus.AT_UPPER
        st[bad & ~up_f] = VarStatus.FREE_ZERO
        bad = nb & (st == VarStatus.AT_UPPER) & ~up_f
        st[bad & lo_f] = VarStatus.AT_LOWER
        st[bad & ~lo_f] = VarStatus.FREE_ZERO
        free = nb & (st == VarStatus.FREE_ZERO)
        st[free & lo_f] = VarStatus.AT_LOWER
        st[free & ~lo_f & up_f] = VarStatus.AT_UPPER

        at_lo = st == VarStatus.AT_LOWER
        at_up = st == VarStatus.AT_UPPER
        self.x[at_lo] = self.lo[at_lo]
        self.x[at_up] = self.up[at_up]
        self.x[st == VarStatus.FREE_ZERO] = 0.0

    def refactor(self) -> None:
        """
        Factorize the current basis. A singular basis is repaired by putting the row
        columns back into it.

        Raises:
            NumericalFailure: the basis stayed singular after MAX_REPAIRS repairs
        """
        try:
            self._factorize()
        except NumericalFailure as exc:
            self.repairs += 1
            if self.repairs > MAX_REPAIRS:
                raise
            logger.debug(f"{exc}; restoring the row basis (repair {self.repairs})")
            self._restore_row_basis()
            self._factorize()

    def _factorize(self) -> None:
        B = self.lp.A_full[:, self.basic].tocsc()
        try:
            lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalFailure(f"basis factorization failed: {exc}") from exc
        saved = self.x.copy()
        self.lu = lu
        self.etas = []
        self.compute_primal()
        residual = self.lp.A_full @ self.x
        scale = max(1.0, float(np.max(np.abs(self.x))) if len(self.x) else 1.0)
        if not np.all(np.isfinite(residual)) or np.max(np.abs(residual), initial=0.0) > CERTIFY_TOL * scale:
            self.x = saved
            raise NumericalFailure("basis is numerically singular")

    def _restore_row_basis(self) -> None:
        """Make every row column basic; structural basics move to their nearest finite bound."""
        n = self.lp.n
        for j in self.basic[self.basic < n]:
            lo, up, value = self.lo[j], self.up[j], self.x[j]
            if np.isfinite(lo) and (not np.isfinite(up) or abs(value - lo) <= abs(up - value)):
                self.status[j] = VarStatus.AT_LOWER
            elif np.isfinite(up):
                self.status[j] = VarStatus.AT_UPPER
            else:
                self.status[j] = VarStatus.FREE_ZERO
        self.basic = np.arange(n, self.lp.ntot, dtype=np.int64)
        self.status[self.basic] = VarStatus.BASIC
        self._place_nonbasic()

    def compute_primal(self) -> None:
        nonbasic_x = self.x.copy()
        nonbasic_x[self.basic] = 0.0
        self.x[self.basic] = self.ftran(-(self.lp.A_full @ nonbasic_x))

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self.lu.solve(a)
        for p, eta in self.etas:
            vp = v[p]
            if vp != 0.0:
                v += eta * vp
                v[p] = eta[p] * vp
        return v

    def btran(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float)
        for p, eta in reversed(self.etas):
            u[p] = float(np.dot(eta, u))
        return self.lu.solve(u, trans="T")

    # =========================================================================
    # Pivoting rules
    # =========================================================================

    def choose_entering(self, d: np.ndarray, bland: bool, rejected: np.ndarray) -> Tuple[int, int]:
        st = self.status
        movable = (self.lo < self.up) & ~rejected
        can_rise = ((st == VarStatus.AT_LOWER) | (st == VarStatus.FREE_ZERO)) & movable & (d < -DUAL_TOL)
        can_fall = ((st == VarStatus.AT_UPPER) | (st == VarStatus.FREE_ZERO)) & movable & (d > DUAL_TOL)
        candidates = can_rise | can_fall
        if not candidates.any():
            return -1, 0
        if bland:
            q = int(np.flatnonzero(candidates)[0])
        else:
            q = int(np.argmax(np.where(candidates, np.abs(d), 0.0)))
        return q, (1 if can_rise[q] else -1)

    def ratio_test(
        self,
        alpha: np.ndarray,
        q: int,
        direction: int,
        below: np.ndarray,
        above: np.ndarray,
        bland: bool,
    ) -> Tuple[Optional[int], float, float, bool]:
        """
        Returns:
            (leaving position or None, step length, leaving value, bound flip flag)
        """
        xb = self.x[self.basic]
        wl = self.lo[self.basic].copy()
        wu = self.up[self.basic].copy()
        wu[below] = wl[below]
        wl[below] = -np.inf
        wl[above] = wu[above]
        wu[above] = np.inf

        rate = -alpha * direction
        rising = (rate > PIVOT_TOL) & np.isfinite(wu)
        falling = (rate < -PIVOT_TOL) & np.isfinite(wl)
        ratios = np.full(len(xb), np.inf)
        ratios[rising] = (wu[rising] - xb[rising]) / rate[rising]
        ratios[falling] = (xb[falling] - wl[falling]) / -rate[falling]

        flip_range = self.up[q] - self.lo[q]
        if not np.isfinite(ratios).any():
            if np.isfinite(flip_range):
                return None, flip_range, 0.0, True
            return None, np.inf, 0.0, False

        if bland:
            best = max(float(np.min(ratios)), 0.0)
            if flip_range <= best:
                return None, flip_range, 0.0, True
            ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))
            p = int(ties[np.argmin(self.basic[ties])])
            theta = best
        else:
            relaxed = np.full(len(xb), np.inf)
            relaxed[rising] = (wu[rising] - xb[rising] + HARRIS_TOL) / rate[rising]
            relaxed[falling] = (xb[falling] - wl[falling] + HARRIS_TOL) / -rate[falling]
            theta_max = float(np.min(relaxed))
            eligible = ratios <= theta_max
            p = int(np.argmax(np.where(eligible, np.abs(rate), -1.0)))
            theta = max(float(ratios[p]), 0.0)
            if flip_range <= theta:
                return None, flip_range, 0.0, True
        leave_value = wu[p] if rate[p] > 0 else wl[p]
        return p, theta, float(leave_value), False

    # =========================================================================
    # Main loop
    # =========================================================================

    def run(self) -> LpResult:
        self.refactor()
        bland = self.force_bland
        stalled = 0
        # Candidates whose column is numerically zero along every bounded direction
        rejected = np.zeros(self.lp.ntot, dtype=bool)
        while True:
            if self.deadline is not None and time.monotonic() > self.deadline:
                return LpResult(SolveStatus.TIME_LIMIT, iterations=self.iterations)
            if self.iterations >= self.max_iterations:
                raise NumericalFailure(f"simplex exceeded {self.max_iterations} iterations")
            if len(self.etas) >= REFACTOR_INTERVAL:
                self.refactor()
                rejected[:] = False

            xb = self.x[self.basic]
            below = xb < self.lo[self.basic] - PRIMAL_TOL
            above = xb > self.up[self.basic] + PRIMAL_TOL
            phase_one = bool(below.any() or above.any())
            if phase_one:
                cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                d = -(self.lp.AT @ self.btran(cb))
            else:
                d = self.lp.cost - self.lp.AT @ self.btran(self.lp.cost[self.basic])
            d[self.basic] = 0.0

            q, direction = self.choose_entering(d, bland, rejected)
            if q < 0:
                if self.etas:
                    self.refactor()
                    rejected[:] = False
                    continue
                if phase_one:
                    return self._phase_one_optimum(xb, below, above, rejected)
                return self.finish()

            alpha = self.ftran(self.lp.column(q))
            alpha[np.abs(alpha) < ZERO_TOL] = 0.0
            p, theta, leave_value, flip = self.ratio_test(alpha, q, direction, below, above, bland)
            if p is None and not flip:
                if self.etas:
                    self.refactor()
                    rejected[:] = False
                    continue
                if phase_one or self._near_blocked(alpha, direction, below, above):
                    logger.debug(f"Column {q} has no usable pivot; rejected")
                    rejected[q] = True
                    continue
                if self.box_bounded:
                    raise NumericalFailure(f"unbounded ray along column {q} in a box-bounded LP")
                logger.debug(f"LP unbounded along column {q}")
                return LpResult(SolveStatus.UNBOUNDED, iterations=self.iterations)
            if not flip and abs(alpha[p]) < SMALL_PIVOT and self.etas:
                self.refactor()
                rejected[:] = False
                continue

            step = direction * theta
            if step != 0.0:
                self.x[self.basic] -= alpha * step
            if flip:
                if direction > 0:
                    self.status[q] = VarStatus.AT_UPPER
                    self.x[q] = self.up[q]
                else:
                    self.status[q] = VarStatus.AT_LOWER
                    self.x[q] = self.lo[q]
            else:
                leaving = int(self.basic[p])
                self.x[leaving] = leave_value
                self.status[leaving] = (
                    VarStatus.AT_LOWER if leave_value == self.lo[leaving] else VarStatus.AT_UPPER
                )
                self.x[q] += step
                self.status[q] = VarStatus.BASIC
                self.basic[p] = q
                eta = -alpha / alpha[p]
                eta[p] = 1.0 / alpha[p]
                self.etas.append((p, eta))
            self.iterations += 1
            rejected[:] = False

            if theta * abs(d[q]) <= 1e-12:
                stalled += 1
                if stalled > STALL_LIMIT and not bland:
                    logger.debug(f"Switching to Bland's rule after {stalled} stalled pivots")
                    bland = True
            else:
                stalled = 0
                bland = self.force_bland

    def _near_blocked(self, alpha: np.ndarray, direction: int, below: np.ndarray, above: np.ndarray) -> bool:
        """Whether a bounded basic variable moves along the ray at a rate below the pivot tolerance."""
        rate = -alpha * direction
        wl = np.where(above, self.up[self.basic], np.where(below, -np.inf, self.lo[self.basic]))
        wu = np.where(below, self.lo[self.basic], np.where(above, np.inf, self.up[self.basic]))
        return bool(np.any(((rate > 0) & np.isfinite(wu)) | ((rate < 0) & np.isfinite(wl))))

    def _phase_one_optimum(
        self, xb: np.ndarray, below: np.ndarray, above: np.ndarray, rejected: np.ndarray
    ) -> LpResult:
        """Phase one cannot improve: infeasible, unless only rounding-level candidates were left."""
        infeasibility = float(
            np.sum(self.lo[self.basic][below] - xb[below]) + np.sum(xb[above] - self.up[self.basic][above])
        )
        scale = max(1.0, float(np.max(np.abs(xb), initial=0.0)))
        if rejected.any() and infeasibility <= CERTIFY_TOL * scale:
            raise NumericalFailure(f"phase one stalled at infeasibility {infeasibility:.3g}")
        logger.debug(f"LP infeasible after {self.iterations} iterations (infeasibility {infeasibility:.3g})")
        return LpResult(SolveStatus.INFEASIBLE, iterations=self.iterations)

    def finish(self) -> LpResult:
        """Certify optimality on a fresh factorization and package the result."""
        duals = self.btran(self.lp.cost[self.basic])
        d = self.lp.cost - self.lp.AT @ duals
        st = self.status
        movable = self.lo < self.up
        wrong_sign = (
            ((st == VarStatus.AT_LOWER) & movable & (d < -CERTIFY_TOL))
            | ((st == VarStatus.AT_UPPER) & movable & (d > CERTIFY_TOL))
            | ((st == VarStatus.FREE_ZERO) & (np.abs(d) > CERTIFY_TOL))
        )
        if wrong_sign.any():
            raise NumericalFailure("complementary slackness check failed")
        slack_lo = self.x - self.lo
        slack_up = self.up - self.x
        if np.min(slack_lo, initial=0.0) < -CERTIFY_TOL or np.min(slack_up, initial=0.0) < -CERTIFY_TOL:
            raise NumericalFailure("final basic solution violates its bounds")
        objective = float(np.dot(self.lp.cost, self.x))
        return LpResult(
            SolveStatus.OPTIMAL,
            objective=objective,
            x=self.x.copy(),
            duals=duals,
            basis=LpBasis(self.basic.copy(), self.status.copy()),
            iterations=self.iterations,
        )


def solve_lp(
    model: MilpModel,
    time_limit: Optional[float] = None,
) -> Solution:
    """
    Solve the LP relaxation of a model (integrality is ignored).

    Args:
        model: Model to solve
        time_limit: Optional wall-clock limit in seconds

    Returns:
        Solution with status Optimal, Infeasible, Unbounded or TimeLimit; row duals are
        reported in minimization form

    Raises:
        NumericalFailure: the solve failed even with a cold start under Bland's rule
    """
    model.validate()
    started = time.monotonic()
    deadline = started + time_limit if time_limit is not None else None
    arrays = model.to_arrays()
    lp = BoundedSimplex(arrays)
    result = solve_with_retry(lp, deadline=deadline)
    solution = lp_solution(result, arrays, model)
    solution.wall_time = time.monotonic() - started
    logger.debug(
        f"LP {model.name}: {solution.status.value} objective={solution.objective} "
        f"iterations={solution.iterations}"
    )
    return solution


def solve_with_retry(
    lp: BoundedSimplex,
    lower: Optional[np.ndarray] = None,
    upper: Optional[np.ndarray] = None,
    basis: Optional[LpBasis] = None,
    deadline: Optional[float] = None,
) -> LpResult:
    """
    Solve, falling back on numerical failures: the given basis first, then a fresh phase one
    from the all-slack basis, then the all-slack basis under Bland's rule.

    Raises:
        NumericalFailure: every attempt failed
    """
    attempts = [(basis, False)] if basis is not None else []
    attempts += [(None, False), (None, True)]
    failure: Optional[NumericalFailure] = None
    for start, bland in attempts:
        try:
            return lp.solve(lower, upper, basis=start, bland=bland, deadline=deadline)
        except NumericalFailure as exc:
            failure = exc
            mode = "warm" if start is not None else ("cold, Bland's rule" if bland else "cold")
            logger.warning(f"Simplex numerical failure ({mode} start): {exc}")
    raise failure


def lp_solution(result: LpResult, arrays: ModelArrays, model: MilpModel) -> Solution:
    if result.status is not SolveStatus.OPTIMAL:
        return Solution(status=result.status, iterations=result.iterations)
    x = result.x[: arrays.num_cols].copy()
    objective = arrays.obj_sign * result.objective
    return Solution(
        status=SolveStatus.OPTIMAL,
        objective=objective,
        x=x,
        bound=objective,
        gap=0.0,
        iterations=result.iterations,
        row_duals=result.duals,
    )


__all__ = [
    "VarStatus",
    "LpBasis",
    "LpResult",
    "BoundedSimplex",
    "solve_lp",
    "solve_with_retry",
]
