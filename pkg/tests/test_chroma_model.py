"""Tests for the fractionation model."""

import numpy as np
import pandas as pd
import pytest

from robust_fractionation.data.peg_separation import (
    REFERENCE_FRACTIONATION,
    REFERENCE_MODEL_SIZES,
    SWEEP_T_MAX,
)
from robust_fractionation.models.chroma_model import (
    FAMILY_PURITY,
    ChromaConfig,
    SpeciesSpec,
    build_chroma_mip,
    build_envelope,
    chromatogram_frame,
    mccormick_variance_row,
    purity_certificate,
    sigma_from_ntp,
    solve_fractionation,
)
from robust_fractionation.models.dualblock import (
    FAMILY_BASE_C,
    FAMILY_BASE_D,
    FAMILY_ENCODING,
    FAMILY_STRONG_MINUS,
    FAMILY_STRONG_PLUS,
)
from robust_fractionation.solver.milp_model import SolveStatus
from robust_fractionation.verification.primal_oracle import sandwich_check


def toy_config(moment_control: bool = False) -> ChromaConfig:
    """Desired peak near 0.3, impurity near 0.7."""
    species = [
        SpeciesSpec(1, 0.3, 0.28, 0.32, 0.05, 0.5, desired=True),
        SpeciesSpec(2, 0.7, 0.68, 0.72, 0.05, 0.5),
    ]
    return ChromaConfig(species, purity=0.9, eps_sigma=0.5, t0=0.0, t_max=1.0, delta=0.1,
                        moment_control=moment_control)


def within_percent(value, reference, percent=1.0):
    return abs(value - reference) <= percent / 100.0 * reference


class TestConfig:

    def test_reference_heights(self):
        cfg = ChromaConfig.reference()
        heights = cfg.heights()
        assert heights[32] == pytest.approx(0.05 * 0.25)
        assert heights[30] == pytest.approx(-0.95 * 0.25)
        assert sum(cfg.mass_fractions().values()) == pytest.approx(1.0)

    def test_sigma_from_ntp(self):
        assert sigma_from_ntp(3.29, 120000) == pytest.approx(3.29 / np.sqrt(120000))
        with pytest.raises(ValueError):
            sigma_from_ntp(3.29, 0)

    def test_mccormick_row(self):
        moments = mccormick_variance_row(toy_config().species[0], eps_sigma=0.5)
        assert moments.mu_minus == 0.28 and moments.mu_plus == 0.32
        assert moments.beta == pytest.approx(0.6)
        assert moments.var_rhs == pytest.approx(0.32 * 0.28 - 0.5 * 0.05 ** 2)

    def test_envelope_plateau_and_tails(self):
        env = build_envelope(toy_config().species[0])
        peak = 1.0 / (0.05 * np.sqrt(2.0 * np.pi))
        assert env.evaluate(0.3) == pytest.approx(peak)
        assert env.evaluate(0.2) == pytest.approx(peak * np.exp(-0.5 * (0.08 / 0.05) ** 2))
        assert env.evaluate(0.4) == pytest.approx(peak * np.exp(-0.5 * (0.08 / 0.05) ** 2))

    def test_unknown_uncertainty_level(self):
        with pytest.raises(ValueError):
            ChromaConfig.reference(eps_mu=0.005)

    def test_needs_desired_species(self):
        cfg = toy_config()
        cfg.species[0].desired = False
        with pytest.raises(ValueError, match="desired"):
            build_chroma_mip(cfg)

    def test_retention_bounds_contain_nominal(self):
        cfg = toy_config()
        cfg.species[1].mu_minus = 0.71
        with pytest.raises(ValueError):
            build_chroma_mip(cfg)


class TestModelSize:

    def test_reference_grid(self):
        mip = build_chroma_mip(ChromaConfig.reference())
        sizes = mip.size_summary()
        n = 950
        assert mip.encoding.grid.size == n
        assert sizes["variables"] == 4 * (5 + n) + 3 * n + 2
        assert sizes["rows"] == 10450
        assert abs(sizes["variables"] - REFERENCE_MODEL_SIZES[0.001]["variables"]) <= 2
        assert mip.model.family_counts() == {
            FAMILY_ENCODING: n + 4,
            FAMILY_BASE_C: 4 * n,
            FAMILY_BASE_D: 4 * (n - 1),
            FAMILY_STRONG_PLUS: n,
            FAMILY_STRONG_MINUS: n - 1,
            FAMILY_PURITY: 1,
        }

    def test_moment_control_keeps_size(self):
        with_moments = build_chroma_mip(ChromaConfig.reference(moment_control=True)).size_summary()
        without = build_chroma_mip(ChromaConfig.reference(moment_control=False)).size_summary()
        assert with_moments["variables"] == without["variables"]
        assert with_moments["rows"] == without["rows"]

    def test_half_step(self):
        sizes = build_chroma_mip(ChromaConfig.reference(delta=0.0005)).size_summary()
        reference = REFERENCE_MODEL_SIZES[0.0005]
        assert within_percent(sizes["variables"], reference["variables"])
        assert within_percent(sizes["rows"], reference["rows"])

    @pytest.mark.slow
    def test_tenth_step(self):
        sizes = build_chroma_mip(ChromaConfig.reference(delta=0.0001)).size_summary()
        reference = REFERENCE_MODEL_SIZES[0.0001]
        assert within_percent(sizes["variables"], reference["variables"])
        assert within_percent(sizes["rows"], reference["rows"])


class TestToySolve:

    @pytest.mark.parametrize("moment_control", [False, True])
    def test_window_brackets_desired_peak(self, moment_control):
        plan = solve_fractionation(toy_config(moment_control))
        assert plan.status is SolveStatus.OPTIMAL
        assert plan.x_minus <= 0.3 <= plan.x_plus
        assert plan.x_plus < 0.6
        assert plan.objective == pytest.approx(plan.x_plus - plan.x_minus)
        assert plan.purity_slack >= -1e-7
        assert all(r.feasible for r in plan.sip_reports.values())

    def test_certificates_pass_sandwich(self):
        plan = solve_fractionation(toy_config())
        for cert in plan.certificates:
            sandwich_check(cert, [1, 2])
        assert purity_certificate(plan) >= plan.purity_slack - 1e-6

    def test_moments_never_shrink_the_window(self):
        without = solve_fractionation(toy_config(False))
        with_moments = solve_fractionation(toy_config(True))
        assert with_moments.objective >= without.objective - 1e-9

    def test_chromatogram_frame(self):
        cfg = toy_config()
        plan = solve_fractionation(cfg)
        frame = chromatogram_frame(cfg, plan)
        assert isinstance(frame, pd.DataFrame)
        assert list(frame.columns) == ["t", "envelope_s1", "density_s1", "envelope_s2", "density_s2", "window"]
        assert len(frame) == 11
        inside = frame.loc[frame["window"] == 1, "t"]
        assert inside.min() == pytest.approx(plan.x_minus)
        assert inside.max() == pytest.approx(plan.x_plus)
        assert (frame["envelope_s1"] >= frame["density_s1"] - 1e-12).all()


@pytest.mark.slow
class TestReferenceReproduction:

    @pytest.mark.parametrize("eps_mu, moment_control", sorted(REFERENCE_FRACTIONATION))
    def test_fractionation_time_coarse(self, eps_mu, moment_control):
        cfg = ChromaConfig.reference(eps_mu, moment_control, delta=0.002, t_max=SWEEP_T_MAX)
        plan = solve_fractionation(cfg)
        assert plan.status is SolveStatus.OPTIMAL
        assert plan.objective == pytest.approx(REFERENCE_FRACTIONATION[(eps_mu, moment_control)], abs=0.008)

    @pytest.mark.parametrize("eps_mu, moment_control", sorted(REFERENCE_FRACTIONATION))
    def test_fractionation_time(self, eps_mu, moment_control):
        plan = solve_fractionation(ChromaConfig.reference(eps_mu, moment_control))
        assert plan.objective == pytest.approx(REFERENCE_FRACTIONATION[(eps_mu, moment_control)], abs=0.005)


@pytest.mark.slow
class TestConvergence:

    @pytest.mark.parametrize("moment_control", [False, True])
    def test_objective_settles_as_step_shrinks(self, moment_control):
        objectives = []
        for delta in (0.008, 0.004, 0.002, 0.001):
            cfg = ChromaConfig.reference(0.004, moment_control, delta=delta, t_max=SWEEP_T_MAX)
            plan = solve_fractionation(cfg)
            assert plan.status is SolveStatus.OPTIMAL
            objectives.append(plan.objective)
        changes = np.abs(np.diff(objectives))
        assert changes[-1] <= changes[0] + 1e-9
        assert changes[-1] <= 0.003
