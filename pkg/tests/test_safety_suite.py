"""
Randomized safety checks: every solved certificate must pass the continuum check and stay
below the atomic primal oracle, so the robust constraint holds for every atomic measure.
"""

import numpy as np
import pytest

from conftest import make_block, random_block
from robust_fractionation.models.ambiguity import MomentSpec
from robust_fractionation.models.generic_model import GenericConfig, solve_generic
from robust_fractionation.solver.milp_model import SolveStatus
from robust_fractionation.verification.primal_oracle import SANDWICH_TOL, sandwich_check

INSTANCES = 200
WIDE_INSTANCES = 60
VARIABLE_INSTANCES = 40
WIDTH = {"x_plus": 1.0, "x_minus": -1.0}
FINE_DELTA = 0.05


def random_config(seed: int) -> GenericConfig:
    rng = np.random.default_rng(seed)
    block = random_block(rng, with_moments=bool(seed % 2))
    if rng.uniform() < 0.5:
        return GenericConfig(block, rhs=float(rng.uniform(0.05, 0.6)), objective=WIDTH, maximize=False)
    return GenericConfig(block, rhs=-float(rng.uniform(0.3, 0.9)), objective=WIDTH, height=-1.0)


def wide_block(rng: np.random.Generator, with_moments: bool):
    """Block with 5 to 40 grid points of spacing 0.05 and total mass cap at least 1.2."""
    n = int(rng.integers(5, 41))
    t_max = (n - 1) * FINE_DELTA
    caps = rng.uniform(0.2, 2.0, size=n)
    mass = FINE_DELTA * caps.sum()
    if mass < 1.2:
        caps *= 1.2 / mass
    moments = None
    if with_moments:
        lo = float(rng.uniform(0.0, t_max))
        hi = float(min(lo + rng.uniform(0.0, 0.3), t_max))
        moments = MomentSpec.mccormick(lo, hi, float(rng.uniform(0.05, 0.5)), 0.5)
    return make_block(0.0, t_max, FINE_DELTA, caps, moments)


def wide_config(seed: int) -> GenericConfig:
    rng = np.random.default_rng(10_000 + seed)
    block = wide_block(rng, with_moments=bool(seed % 2))
    height = float(rng.uniform(0.2, 3.0))
    if rng.uniform() < 0.5:
        return GenericConfig(block, rhs=height * float(rng.uniform(0.05, 0.6)), objective=WIDTH,
                             maximize=False, height=height)
    return GenericConfig(block, rhs=-height * float(rng.uniform(0.3, 0.9)), objective=WIDTH, height=-height)


def variable_height_config(seed: int) -> GenericConfig:
    """Height sign * (0.2 + 2.8 x[0]) with x[0] in [0, 1] traded against the window width."""
    rng = np.random.default_rng(20_000 + seed)
    block = random_block(rng, with_moments=bool(seed % 2))
    sign = 1.0 if seed % 4 < 2 else -1.0
    objective = {"x[0]": 1.0, **WIDTH}
    common = dict(x_lower=[0.0], x_upper=[1.0], height=0.2 * sign, height_terms={"x[0]": 2.8 * sign})
    if sign > 0:
        return GenericConfig(block, rhs=float(rng.uniform(0.05, 0.5)), objective=objective,
                             maximize=False, **common)
    return GenericConfig(block, rhs=-float(rng.uniform(0.3, 0.9)), objective=objective, **common)


def assert_safe(cfg: GenericConfig):
    result = solve_generic(cfg)
    if result.status is not SolveStatus.OPTIMAL:
        assert result.status is SolveStatus.INFEASIBLE
        return result
    assert result.sip_report.feasible
    assert result.certificate.dual_objective() >= cfg.rhs - 1e-7

    report = sandwich_check(result.certificate, [1, 2, 4])
    if not report.vacuous:
        assert report.nonincreasing
        assert min(report.primal_values.values()) >= cfg.rhs - SANDWICH_TOL
    return result


class TestSafety:

    @pytest.mark.parametrize("seed", range(INSTANCES))
    def test_certificate_is_safe(self, seed):
        assert_safe(random_config(seed))

    @pytest.mark.parametrize("seed", range(WIDE_INSTANCES))
    def test_fine_grid_certificate_is_safe(self, seed):
        assert_safe(wide_config(seed))

    @pytest.mark.parametrize("seed", range(VARIABLE_INSTANCES))
    def test_variable_height_certificate_is_safe(self, seed):
        cfg = variable_height_config(seed)
        result = assert_safe(cfg)
        if result.status is SolveStatus.OPTIMAL:
            lo, hi = sorted((0.2 * np.sign(cfg.height), 3.0 * np.sign(cfg.height)))
            assert lo - 1e-7 <= result.height <= hi + 1e-7
            assert result.height == pytest.approx(cfg.height + cfg.height_terms["x[0]"] * result.x[0], abs=1e-7)
