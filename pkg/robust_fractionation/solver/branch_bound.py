"""
Branch-and-bound over binary variables.

LP relaxations are solved with the bounded simplex; children warm-start from the parent's
final basis. Internally everything is in minimization form; results are converted back to
the model's sense.
"""

import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import NumericalFailure
from ..utils.calculations import relative_gap
from .milp_model import (
    BranchingRule,
    MilpModel,
    NodeSelection,
    Solution,
    SolverOptions,
    SolveStatus,
)
from .simplex import BoundedSimplex, LpBasis, LpResult, solve_with_retry

logger = logging.getLogger(__name__)

PROGRESS_EVERY = 500


@dataclass
class _Node:
    node_id: int
    depth: int
    bound: float
    fixings: Dict[int, float] = field(default_factory=dict)
    basis: Optional[LpBasis] = None
    branch_var: int = -1
    branch_up: bool = False
    branch_frac: float = 0.0


class BranchAndBound:
    """
    Best-bound (or depth-first) branch-and-bound with most-fractional or pseudo-cost branching.

    Until the first incumbent exists, best-bound search plunges into the down child of
    each branched node.
    """

    def __init__(self, model: MilpModel, options: Optional[SolverOptions] = None):
        self.model = model
        self.options = options or SolverOptions()
        self.options.validate()
        model.validate()
        self.arrays = model.to_arrays()
        self.lp = BoundedSimplex(self.arrays)
        self.n = self.arrays.num_cols
        self.binaries = self.arrays.binaries

        self.heap: List[Tuple[Tuple[float, ...], int, _Node]] = []
        self.pending: Optional[_Node] = None
        self.next_id = 0
        self.nodes = 0
        self.iterations = 0

        self.incumbent: Optional[np.ndarray] = None
        self.incumbent_value = np.inf
        self.pruned_floor = np.inf
        self.best_bound = -np.inf
        self.bound_history: List[float] = []
        self.incumbent_history: List[float] = []

        nb = len(self.binaries)
        self.pc_sum = np.zeros((2, nb))
        self.pc_count = np.zeros((2, nb))
        self.position = {int(j): k for k, j in enumerate(self.binaries)}

    # =========================================================================
    # Node bookkeeping
    # =========================================================================

    def _push(self, node: _Node) -> None:
        if self.options.node_selection is NodeSelection.DEPTH_FIRST:
            key = (-float(node.depth),)
        else:
            key = (node.bound,)
        heapq.heappush(self.heap, (key, node.node_id, node))

    def _pop(self) -> _Node:
        if self.pending is not None:
            node, self.pending = self.pending, None
            return node
        return heapq.heappop(self.heap)[2]

    def _has_open(self) -> bool:
        return self.pending is not None or bool(self.heap)

    def _open_bound(self) -> float:
        bounds = []
        if self.heap:
            if self.options.node_selection is NodeSelection.BEST_BOUND:
                bounds.append(self.heap[0][2].bound)
            else:
                bounds.append(min(entry[2].bound for entry in self.heap))
        if self.pending is not None:
            bounds.append(self.pending.bound)
        return min(bounds) if bounds else np.inf

    def _current_bound(self) -> float:
        return min(self._open_bound(), self.pruned_floor, self.incumbent_value)

    def _record_bound(self) -> None:
        bound = self._current_bound()
        if np.isfinite(bound):
            self.best_bound = max(self.best_bound, bound)
            self.bound_history.append(self.best_bound)

    def _new_node(self, **kwargs) -> _Node:
        node = _Node(node_id=self.next_id, **kwargs)
        self.next_id += 1
        return node

    def _prune_tolerance(self) -> float:
        return self.options.stop_gap * max(1.0, abs(self.incumbent_value))

    def _bounds_for(self, node: _Node) -> Tuple[np.ndarray, np.ndarray]:
        lower = self.arrays.lower.copy()
        upper = self.arrays.upper.copy()
        for j, value in node.fixings.items():
            lower[j] = value
            upper[j] = value
        return lower, upper

    # =========================================================================
    # Branching
    # =========================================================================

    def _fractionality(self, x: np.ndarray) -> np.ndarray:
        values = x[self.binaries]
        frac = values - np.floor(values)
        return np.minimum(frac, 1.0 - frac)

    def _select_branch(self, x: np.ndarray) -> int:
        """Binary to branch on, or -1 when the LP point is integral."""
        dist = self._fractionality(x)
        fractional = dist > self.options.int_tol
        if not fractional.any():
            return -1
        if self.options.branching is BranchingRule.PSEUDO_COST:
            frac = x[self.binaries] - np.floor(x[self.binaries])
            down = self._pseudo_costs(0)
            up = self._pseudo_costs(1)
            score = np.minimum(down * frac, up * (1.0 - frac))
            score = np.where(fractional, score + 1e-12 * dist, -1.0)
        else:
            score = np.where(fractional, dist, -1.0)
        return int(self.binaries[int(np.argmax(score))])

    def _pseudo_costs(self, side: int) -> np.ndarray:
        counts = self.pc_count[side]
        known = counts > 0
        averages = np.divide(self.pc_sum[side], counts, out=np.zeros_like(counts), where=known)
        fallback = float(np.mean(averages[known])) if known.any() else 1.0
        return np.where(known, averages, fallback)

    def _update_pseudo_cost(self, node: _Node, objective: float) -> None:
        if node.branch_var < 0:
            return
        k = self.position[node.branch_var]
        side = 1 if node.branch_up else 0
        change = (1.0 - node.branch_frac) if node.branch_up else node.branch_frac
        if change <= 0:
            return
        self.pc_sum[side, k] += max(objective - node.bound, 0.0) / change
        self.pc_count[side, k] += 1

    # =========================================================================
    # Incumbents
    # =========================================================================

    def _try_incumbent(
        self, x: np.ndarray, node: _Node, result: LpResult, deadline: Optional[float]
    ) -> None:
        candidate = x.copy()
        candidate[self.binaries] = np.round(candidate[self.binaries])
        value = float(np.dot(self.arrays.cost, candidate))

        lower, upper = self._bounds_for(node)
        lower[self.binaries] = candidate[self.binaries]
        upper[self.binaries] = candidate[self.binaries]
        polished = solve_with_retry(self.lp, lower, upper, basis=result.basis, deadline=deadline)
        self.iterations += polished.iterations
        if polished.status is SolveStatus.OPTIMAL:
            refined = polished.x[: self.n].copy()
            refined[self.binaries] = candidate[self.binaries]
            if polished.objective <= value + self._prune_tolerance():
                candidate, value = refined, float(np.dot(self.arrays.cost, refined))

        violation = self.model.max_violation(candidate)
        if violation > self.options.feas_tol:
            logger.debug(f"Rejected integral point at node {node.node_id}: violation {violation:.3g}")
            return
        if value < self.incumbent_value:
            self.incumbent = candidate
            self.incumbent_value = value
            self.incumbent_history.append(self.arrays.obj_sign * value)
            logger.debug(f"New incumbent {self.arrays.obj_sign * value:.10g} at node {node.node_id}")

    def _resolve_cold(
        self, node: _Node, lower: np.ndarray, upper: np.ndarray, deadline: Optional[float]
    ) -> LpResult:
        """
        Re-solve a node LP that came back unbounded from a fresh phase one. A node sits below
        a bounded root, so a second unbounded answer is a numerical failure.
        """
        logger.warning(f"Node {node.node_id} LP reported unbounded below a bounded root; re-solving cold")
        result = solve_with_retry(self.lp, lower, upper, basis=None, deadline=deadline)
        if result.status is SolveStatus.UNBOUNDED:
            raise NumericalFailure(f"node {node.node_id} LP unbounded although its root relaxation is bounded")
        return result

    # =========================================================================
    # Main loop
    # =========================================================================

    def solve(self) -> Solution:
        started = time.monotonic()
        limit = self.options.time_limit
        deadline = started + limit if limit is not None else None
        logger.info(
            f"Branch-and-bound on {self.model.name}: {self.n} variables, "
            f"{self.arrays.num_rows} rows, {len(self.binaries)} binaries"
        )

        self._push(self._new_node(depth=0, bound=-np.inf))
        status: Optional[SolveStatus] = None

        while self._has_open():
            if self.incumbent is not None:
                gap = relative_gap(self._current_bound(), self.incumbent_value)
                if gap <= self.options.stop_gap:
                    status = SolveStatus.OPTIMAL if gap <= self.options.rel_gap else SolveStatus.GAP_LIMIT
                    break
            if self.options.node_limit is not None and self.nodes >= self.options.node_limit:
                status = SolveStatus.NODE_LIMIT
                break
            if deadline is not None and time.monotonic() > deadline:
                status = SolveStatus.TIME_LIMIT
                break

            node = self._pop()
            if node.bound >= self.incumbent_value - self._prune_tolerance():
                if node.bound < self.incumbent_value:
                    self.pruned_floor = min(self.pruned_floor, node.bound)
                continue

            lower, upper = self._bounds_for(node)
            result = solve_with_retry(self.lp, lower, upper, basis=node.basis, deadline=deadline)
            self.iterations += result.iterations
            if result.status is SolveStatus.TIME_LIMIT:
                self._push(node)
                status = SolveStatus.TIME_LIMIT
                break
            self.nodes += 1
            if result.status is SolveStatus.INFEASIBLE:
                logger.debug(f"Node {node.node_id} infeasible")
                self._record_bound()
                continue
            if result.status is SolveStatus.UNBOUNDED:
                if node.depth == 0:
                    logger.info("LP relaxation is unbounded")
                    return self._finish(SolveStatus.UNBOUNDED, started)
                result = self._resolve_cold(node, lower, upper, deadline)
                self.iterations += result.iterations
                if result.status is SolveStatus.TIME_LIMIT:
                    self._push(node)
                    status = SolveStatus.TIME_LIMIT
                    break
                if result.status is SolveStatus.INFEASIBLE:
                    self._record_bound()
                    continue

            objective = max(result.objective, node.bound)
            self._update_pseudo_cost(node, objective)
            if objective >= self.incumbent_value - self._prune_tolerance():
                if objective < self.incumbent_value:
                    self.pruned_floor = min(self.pruned_floor, objective)
                self._record_bound()
                continue

            x = result.x[: self.n]
            j = self._select_branch(x)
            if j < 0:
                self._try_incumbent(x, node, result, deadline)
                self._record_bound()
                continue

            frac = float(x[j] - np.floor(x[j]))
            down = self._new_node(
                depth=node.depth + 1, bound=objective, fixings={**node.fixings, j: 0.0},
                basis=result.basis, branch_var=j, branch_up=False, branch_frac=frac,
            )
            up = self._new_node(
                depth=node.depth + 1, bound=objective, fixings={**node.fixings, j: 1.0},
                basis=result.basis, branch_var=j, branch_up=True, branch_frac=frac,
            )
            plunge = (
                self.incumbent is None
                and self.pending is None
                and self.options.node_selection is NodeSelection.BEST_BOUND
            )
            if plunge:
                self.pending = down
            else:
                self._push(down)
            self._push(up)
            self._record_bound()

            if self.nodes % PROGRESS_EVERY == 0:
                logger.info(
                    f"  nodes={self.nodes} open={len(self.heap)} "
                    f"bound={self.arrays.obj_sign * self._current_bound():.8g} "
                    f"incumbent={self.arrays.obj_sign * self.incumbent_value:.8g}"
                )

        if status is None:
            status = SolveStatus.OPTIMAL if self.incumbent is not None else SolveStatus.INFEASIBLE
        return self._finish(status, started)

    def _finish(self, status: SolveStatus, started: float) -> Solution:
        sign = self.arrays.obj_sign
        wall = time.monotonic() - started
        if status is SolveStatus.UNBOUNDED or (status is SolveStatus.INFEASIBLE and self.incumbent is None):
            solution = Solution(status=status, nodes=self.nodes, iterations=self.iterations, wall_time=wall)
            logger.info(f"Branch-and-bound finished: {status.value} after {self.nodes} nodes")
            return solution

        bound = self._current_bound()
        self._record_bound()
        if self.incumbent is not None:
            violation = self.model.max_violation(self.incumbent)
            if violation > self.options.feas_tol:
                raise NumericalFailure(f"incumbent violates the model by {violation:.3g}")
            gap = relative_gap(bound, self.incumbent_value)
            objective = sign * self.incumbent_value
        else:
            gap = np.inf
            objective = None
        solution = Solution(
            status=status,
            objective=objective,
            x=self.incumbent,
            bound=sign * bound if np.isfinite(bound) else None,
            gap=gap,
            nodes=self.nodes,
            iterations=self.iterations,
            wall_time=wall,
            bound_history=[sign * b for b in self.bound_history],
            incumbent_history=list(self.incumbent_history),
        )
        logger.info(
            f"Branch-and-bound finished: {status.value} objective={objective} "
            f"gap={gap:.3g} nodes={self.nodes} time={wall:.2f}s"
        )
        return solution


def solve_milp(model: MilpModel, options: Optional[SolverOptions] = None) -> Solution:
    """
    Solve a MILP by branch-and-bound.

    Args:
        model: Model with continuous and binary variables
        options: Solver settings (defaults when omitted)

    Returns:
        Solution with status Optimal, Infeasible, Unbounded or a limit status; limit statuses
        carry the incumbent (if any) and the best bound

    Raises:
        NumericalFailure: an LP could not be solved even with a cold Bland restart
    """
    return BranchAndBound(model, options).solve()


__all__ = ["BranchAndBound", "solve_milp"]
