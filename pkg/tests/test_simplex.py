"""Tests for the bounded primal simplex."""

import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from robust_fractionation.solver.milp_model import MilpModel, ObjSense, RowSense, SolveStatus
from robust_fractionation.solver.simplex import BoundedSimplex, solve_lp

TOL = 1e-7


def random_boxed_lp(rng, n=5, m=4):
    model = MilpModel("random")
    lower = rng.uniform(-2.0, 0.0, n)
    upper = lower + rng.uniform(0.5, 3.0, n)
    cols = [model.add_variable(f"x[{j}]", lower[j], upper[j]) for j in range(n)]
    A = rng.normal(size=(m, n))
    center = (lower + upper) / 2
    senses = [RowSense.LE, RowSense.GE, RowSense.EQ]
    picked = []
    for i in range(m):
        sense = senses[i % 3] if i < 3 else RowSense.LE
        activity = float(A[i] @ center)
        rhs = activity if sense is RowSense.EQ else activity + (0.5 if sense is RowSense.LE else -0.5)
        model.add_row({cols[j]: float(A[i, j]) for j in range(n)}, sense, rhs)
        picked.append((sense, rhs))
    c = rng.normal(size=n)
    model.set_objective({cols[j]: float(c[j]) for j in range(n)}, ObjSense.MINIMIZE)
    return model, A, picked, c, lower, upper


def oracle(A, picked, c, lower, upper):
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, (sense, rhs) in zip(A, picked):
        if sense is RowSense.EQ:
            A_eq.append(row)
            b_eq.append(rhs)
        else:
            flip = 1.0 if sense is RowSense.LE else -1.0
            A_ub.append(flip * row)
            b_ub.append(flip * rhs)
    return linprog(
        c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=b_ub or None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=b_eq or None,
        bounds=list(zip(lower, upper)),
        method="highs",
    )


def vertex_optimum(A, picked, c, lower, upper):
    """Minimum of c x over the vertices found by solving every square active set."""
    n = len(c)
    G, h = [], []
    for row, (sense, rhs) in zip(A, picked):
        if sense is not RowSense.GE:
            G.append(row)
            h.append(rhs)
        if sense is not RowSense.LE:
            G.append(-row)
            h.append(-rhs)
    eye = np.eye(n)
    G = np.vstack([np.array(G), eye, -eye])
    h = np.concatenate([h, upper, -lower])
    best = np.inf
    for active in itertools.combinations(range(len(h)), n):
        sub = G[list(active)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(active)])
        if np.all(G @ x <= h + 1e-9):
            best = min(best, float(c @ x))
    return best


class TestAgainstOracle:

    @pytest.mark.parametrize("seed", range(100))
    def test_random_boxed_lp(self, seed):
        rng = np.random.default_rng(seed)
        model, A, picked, c, lower, upper = random_boxed_lp(rng, n=3 + seed % 6, m=2 + seed % 5)
        solution = solve_lp(model)
        reference = oracle(A, picked, c, lower, upper)
        assert reference.status == 0
        assert solution.status is SolveStatus.OPTIMAL
        assert solution.objective == pytest.approx(reference.fun, abs=1e-6)
        assert model.max_violation(solution.x) <= TOL

    @pytest.mark.parametrize("seed", range(30))
    def test_small_lp_matches_vertex_enumeration(self, seed):
        rng = np.random.default_rng(500 + seed)
        model, A, picked, c, lower, upper = random_boxed_lp(rng, n=2 + seed % 2, m=2 + seed % 3)
        solution = solve_lp(model)
        assert solution.status is SolveStatus.OPTIMAL
        assert solution.objective == pytest.approx(vertex_optimum(A, picked, c, lower, upper), abs=1e-6)

    def test_maximize_reports_own_sense(self):
        model = MilpModel()
        x = model.add_variable("x", 0.0, 4.0)
        y = model.add_variable("y", 0.0, 4.0)
        model.add_row({x: 1.0, y: 1.0}, RowSense.LE, 5.0)
        model.set_objective({x: 2.0, y: 1.0}, ObjSense.MAXIMIZE)
        solution = solve_lp(model)
        assert solution.is_optimal
        assert solution.objective == pytest.approx(9.0)
        assert solution.values([x, y]) == pytest.approx([4.0, 1.0])


class TestStatuses:

    def test_infeasible_rows(self):
        model = MilpModel()
        x = model.add_variable("x", 0.0, 1.0)
        model.add_row({x: 1.0}, RowSense.GE, 2.0)
        assert solve_lp(model).status is SolveStatus.INFEASIBLE

    def test_conflicting_equalities(self):
        model = MilpModel()
        x = model.add_variable("x", 0.0, 10.0)
        y = model.add_variable("y", 0.0, 10.0)
        model.add_row({x: 1.0, y: 1.0}, RowSense.EQ, 3.0)
        model.add_row({x: 1.0, y: 1.0}, RowSense.EQ, 4.0)
        assert solve_lp(model).status is SolveStatus.INFEASIBLE

    def test_unbounded(self):
        model = MilpModel()
        x = model.add_variable("x", 0.0)
        y = model.add_variable("y", 0.0)
        model.add_row({x: 1.0, y: -1.0}, RowSense.LE, 1.0)
        model.set_objective({x: 1.0}, ObjSense.MAXIMIZE)
        solution = solve_lp(model)
        assert solution.status is SolveStatus.UNBOUNDED
        assert not solution.has_solution

    def test_no_rows(self):
        model = MilpModel()
        x = model.add_variable("x", -1.0, 2.0)
        y = model.add_variable("y", 0.0, 3.0)
        model.set_objective({x: 1.0, y: -1.0}, ObjSense.MINIMIZE)
        solution = solve_lp(model)
        assert solution.is_optimal
        assert solution.objective == pytest.approx(-4.0)

    def test_no_rows_unbounded(self):
        model = MilpModel()
        x = model.add_variable("x", 0.0)
        model.set_objective({x: 1.0}, ObjSense.MAXIMIZE)
        assert solve_lp(model).status is SolveStatus.UNBOUNDED

    def test_free_variable_with_equality(self):
        model = MilpModel()
        x = model.add_variable("x", -np.inf, np.inf)
        y = model.add_variable("y", 0.0, 2.0)
        model.add_row({x: 1.0, y: 1.0}, RowSense.EQ, 1.0)
        model.set_objective({x: 1.0}, ObjSense.MINIMIZE)
        solution = solve_lp(model)
        assert solution.is_optimal
        assert solution.value(x) == pytest.approx(-1.0)


class TestWarmStart:

    def test_bound_change_reuses_basis(self):
        model = MilpModel()
        x = model.add_variable("x", 0.0, 1.0)
        y = model.add_variable("y", 0.0, 1.0)
        model.add_row({x: 1.0, y: 1.0}, RowSense.LE, 1.5)
        model.set_objective({x: 1.0, y: 1.0}, ObjSense.MAXIMIZE)
        arrays = model.to_arrays()
        lp = BoundedSimplex(arrays)
        first = lp.solve()
        assert first.status is SolveStatus.OPTIMAL
        upper = arrays.upper.copy()
        upper[x] = 0.0
        second = lp.solve(upper=upper, basis=first.basis)
        assert second.status is SolveStatus.OPTIMAL
        # minimization form
        assert second.objective == pytest.approx(-1.0)
        assert second.x[y] == pytest.approx(1.0)

    def test_crossed_bounds_are_infeasible(self):
        model = MilpModel()
        x = model.add_variable("x", 0.0, 1.0)
        model.add_row({x: 1.0}, RowSense.LE, 1.0)
        arrays = model.to_arrays()
        lp = BoundedSimplex(arrays)
        lower = np.array([2.0])
        assert lp.solve(lower=lower).status is SolveStatus.INFEASIBLE
