"""Tests for the atomic primal oracle and the weak-duality sandwich."""

import numpy as np
import pytest

from conftest import make_block
from robust_fractionation.errors import OracleInfeasible, SandwichViolation
from robust_fractionation.models.ambiguity import ConfidenceSet, MomentSpec
from robust_fractionation.verification.primal_oracle import atom_grid, primal_oracle, sandwich_check
from robust_fractionation.verification.sip_check import Certificate


def window_certificate(block, z_bins):
    z = np.zeros(block.grid.size)
    z[list(z_bins)] = 1.0
    return Certificate("window", 1.0, 0.2, 0.6, np.array([1.0, 0.0, 0.0, 0.0, 0.0]), z, block)


class TestAtomGrid:

    def test_refinement(self, uniform_block):
        atoms = atom_grid(uniform_block, 2)
        assert len(atoms) == 21
        assert atoms[1] == pytest.approx(0.05)
        assert atoms[-1] == 1.0

    def test_refine_must_be_positive(self, uniform_block):
        with pytest.raises(ValueError):
            atom_grid(uniform_block, 0)


class TestPrimalOracle:

    def test_window_mass_at_grid_points(self, uniform_block):
        assert primal_oracle(1.0, 0.2, 0.6, uniform_block, 1) == pytest.approx(0.4)

    def test_refined_atoms_escape_the_window(self, uniform_block):
        # bin (0.6, 0.7) can place its mass at 0.65
        assert primal_oracle(1.0, 0.2, 0.6, uniform_block, 2) == pytest.approx(0.3)

    def test_negative_height(self, uniform_block):
        assert primal_oracle(-1.0, 0.2, 0.6, uniform_block, 1) == pytest.approx(-0.5)
        assert primal_oracle(-1.0, 0.2, 0.6, uniform_block, 2) == pytest.approx(-0.5)

    def test_moments_only_tighten(self, uniform_block):
        block = uniform_block.with_moments(MomentSpec.mccormick(0.45, 0.55, 0.5, 0.5))
        assert primal_oracle(1.0, 0.2, 0.6, block, 1) >= primal_oracle(1.0, 0.2, 0.6, uniform_block, 1) - 1e-9

    def test_confidence_set(self):
        block = make_block(confidence_sets=[ConfidenceSet(0.3, 0.5, 0.2)])
        assert primal_oracle(1.0, 0.2, 0.6, block, 1) == pytest.approx(0.4)

    def test_upper_confidence_set(self):
        # bins hold up to 0.15 each; outside the window at most 0.05 on bins 0 and 1 plus 4 * 0.15
        assert primal_oracle(1.0, 0.2, 0.6, make_block(caps=1.5), 1) == pytest.approx(0.1)
        block = make_block(caps=1.5, confidence_sets=[ConfidenceSet(0.0, 0.2, -0.05)])
        assert primal_oracle(1.0, 0.2, 0.6, block, 1) == pytest.approx(0.35)

    def test_upper_confidence_set_starves_the_mass(self):
        # 0.05 + 9 * 0.1 < 1
        block = make_block(confidence_sets=[ConfidenceSet(0.0, 0.2, -0.05)])
        with pytest.raises(OracleInfeasible):
            primal_oracle(1.0, 0.2, 0.6, block, 1)

    def test_too_little_mass(self):
        with pytest.raises(OracleInfeasible):
            primal_oracle(1.0, 0.2, 0.6, make_block(caps=0.5), 1)


class TestSandwich:

    def test_tight_certificate(self, uniform_block):
        cert = window_certificate(uniform_block, [0, 1, 6, 7, 8, 9, 10])
        report = sandwich_check(cert, [1, 2])
        assert report.dual_value == pytest.approx(0.3)
        assert report.gaps == pytest.approx([0.1, 0.0], abs=1e-9)
        assert report.nonincreasing
        assert not report.vacuous

    def test_violation_raises(self, uniform_block):
        # dual value 0.4 exceeds the refined primal value 0.3
        cert = window_certificate(uniform_block, [0, 1, 7, 8, 9, 10])
        sandwich_check(cert, 1)
        with pytest.raises(SandwichViolation):
            sandwich_check(cert, [1, 2])

    def test_vacuous_when_oracle_empty(self):
        block = make_block(caps=0.5)
        cert = window_certificate(block, [])
        report = sandwich_check(cert, [1, 2])
        assert report.vacuous
        assert report.to_dict()["gap"] is None
