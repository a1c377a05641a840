"""End-to-end tests of the command-line interface."""

import json

import pandas as pd
import pytest

from robust_fractionation.cli import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_LIMIT,
    EXIT_NOT_CONVERGED,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VERIFICATION,
    exit_code,
    main,
    sweep_converged,
)
from robust_fractionation.errors import NumericalFailure
from robust_fractionation.exports.csv_export import SWEEP_COLUMNS
from robust_fractionation.solver.milp_model import SolveStatus

GRID = {"t0": 0.0, "t_max": 1.0, "delta": 0.1}
UNIFORM = {"bin_caps": [1.0] * 11}


def write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    data = {**data, "output": {"dir": str(tmp_path / "out"), **data.get("output", {})}}
    path.write_text(json.dumps(data))
    return path


def var_config(tmp_path, alpha=0.35, **extra):
    return write_config(tmp_path, {"kind": "var", "grid": GRID, "var": {"alpha": alpha, "block": UNIFORM}, **extra})


def read_report(tmp_path):
    return json.loads((tmp_path / "out" / "report.json").read_text())


class TestExitCodes:

    @pytest.mark.parametrize("status, code", [
        (SolveStatus.OPTIMAL, EXIT_OK),
        (SolveStatus.INFEASIBLE, EXIT_INFEASIBLE),
        (SolveStatus.UNBOUNDED, EXIT_INFEASIBLE),
        (SolveStatus.NODE_LIMIT, EXIT_LIMIT),
        (SolveStatus.TIME_LIMIT, EXIT_LIMIT),
        (SolveStatus.GAP_LIMIT, EXIT_LIMIT),
    ])
    def test_mapping(self, status, code):
        assert exit_code(status) == code


class TestSolveVar:

    def test_optimal_run_writes_outputs(self, tmp_path):
        assert main(["solve-var", "--config", str(var_config(tmp_path))]) == EXIT_OK
        report = read_report(tmp_path)
        assert report["status"] == "Optimal"
        assert report["result"]["bound"] == pytest.approx(0.5)
        assert report["verification"]["var"]["check_sip"]["feasible"]
        assert report["verification"]["var"]["sandwich"]["vacuous"] is False
        assert (tmp_path / "out" / "certificates.json").exists()

    def test_infeasible(self, tmp_path):
        assert main(["solve-var", "--config", str(var_config(tmp_path, alpha=0.95))]) == EXIT_INFEASIBLE
        assert read_report(tmp_path)["status"] == "Infeasible"

    def test_lp_and_workbook(self, tmp_path):
        path = var_config(tmp_path, output={"workbook": True})
        assert main(["solve-var", "--config", str(path), "--lp"]) == EXIT_OK
        assert (tmp_path / "out" / "model.lp").read_text().startswith("\\* var *\\")
        assert (tmp_path / "out" / "run.xlsx").read_bytes()[:2] == b"PK"

    def test_out_override(self, tmp_path):
        target = tmp_path / "elsewhere"
        assert main(["solve-var", "--config", str(var_config(tmp_path)), "--out", str(target)]) == EXIT_OK
        assert (target / "report.json").exists()


class TestVerify:

    def test_round_trip(self, tmp_path):
        main(["solve-var", "--config", str(var_config(tmp_path))])
        bundle = tmp_path / "out" / "certificates.json"
        assert main(["verify", str(bundle), "--refine", "1", "2", "4"]) == EXIT_OK

    def test_tampered_certificate(self, tmp_path):
        main(["solve-var", "--config", str(var_config(tmp_path))])
        bundle = tmp_path / "out" / "certificates.json"
        data = json.loads(bundle.read_text())
        data["certificates"][0]["z"] = [0.0] * len(data["certificates"][0]["z"])
        bundle.write_text(json.dumps(data))
        assert main(["verify", str(bundle)]) == EXIT_VERIFICATION

    def test_wrong_format(self, tmp_path):
        bundle = tmp_path / "certificates.json"
        bundle.write_text(json.dumps({"format": "other", "certificates": []}))
        assert main(["verify", str(bundle)]) == EXIT_CONFIG


class TestSolveGeneric:

    def test_narrowest_window(self, tmp_path):
        path = write_config(tmp_path, {
            "kind": "generic",
            "grid": GRID,
            "generic": {
                "block": UNIFORM,
                "rhs": 0.25,
                "objective": {"x_plus": 1.0, "x_minus": -1.0},
                "maximize": False,
            },
        })
        assert main(["solve-generic", "--config", str(path)]) == EXIT_OK
        assert read_report(tmp_path)["result"]["objective"] == pytest.approx(0.4)


class TestSolveChroma:

    def test_toy_separation(self, tmp_path):
        species = [
            {"s": 1, "mu": 0.3, "mu_minus": 0.28, "mu_plus": 0.32, "sigma": 0.05, "q0": 0.5, "desired": True},
            {"s": 2, "mu": 0.7, "mu_minus": 0.68, "mu_plus": 0.72, "sigma": 0.05, "q0": 0.5},
        ]
        path = write_config(tmp_path, {
            "kind": "chroma",
            "grid": GRID,
            "chroma": {"purity": 0.9, "eps_sigma": 0.5, "species": species},
        })
        assert main(["solve-chroma", "--config", str(path), "--no-moments"]) == EXIT_OK
        report = read_report(tmp_path)
        assert report["result"]["purity_certificate"] >= -1e-6
        assert set(report["verification"]) == {"species_1", "species_2"}
        frame = pd.read_csv(tmp_path / "out" / "chromatogram.csv")
        assert frame.columns[0] == "t"
        assert len(frame) == 11


class TestOtherCommands:

    def test_export_lp(self, tmp_path):
        assert main(["export-lp", "--config", str(var_config(tmp_path))]) == EXIT_OK
        text = (tmp_path / "out" / "model.lp").read_text()
        assert "Minimize" in text
        assert text.rstrip().endswith("End")

    def test_sweep(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DRO_THREADS", "1")
        path = write_config(tmp_path, {
            "kind": "var",
            "grid": GRID,
            "var": {"alpha": 0.5, "block": {"envelope": {"mu_minus": 0.45, "mu_plus": 0.55, "sigma": 0.1}}},
        })
        assert main(["sweep", "--config", str(path), "--deltas", "0.1,0.05"]) == EXIT_OK
        frame = pd.read_csv(tmp_path / "out" / "sweep.csv")
        assert list(frame.columns[: len(SWEEP_COLUMNS)]) == SWEEP_COLUMNS
        assert list(frame["delta"]) == [0.1, 0.05]
        assert list(frame["variables"]) == sorted(frame["variables"])
        summary = json.loads((tmp_path / "out" / "sweep_report.json").read_text())
        assert summary["converged"]
        assert summary["deltas"] == [0.1, 0.05]

    def test_sweep_that_drifts_apart_fails(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DRO_THREADS", "1")
        objectives = {0.1: 1.0, 0.05: 0.9, 0.025: 0.5}

        def fake_point(job):
            _, delta = job
            return {"delta": delta, "variables": 1, "rows": 1, "binaries": 1, "status": "Optimal",
                    "objective": objectives[delta], "wall_time": 0.0, "nodes": 1}

        monkeypatch.setattr("robust_fractionation.cli._sweep_point", fake_point)
        assert main(["sweep", "--config", str(var_config(tmp_path)), "--deltas", "0.1,0.05,0.025"]) == EXIT_NOT_CONVERGED
        summary = json.loads((tmp_path / "out" / "sweep_report.json").read_text())
        assert not summary["converged"]
        assert summary["first_change"] == pytest.approx(0.1)
        assert summary["last_change"] == pytest.approx(0.4)

    @pytest.mark.parametrize("deltas", ["0.05,0.1", "0.3"])
    def test_sweep_rejects_bad_steps(self, tmp_path, deltas):
        assert main(["sweep", "--config", str(var_config(tmp_path)), "--deltas", deltas]) == EXIT_CONFIG


class TestSweepVerdict:

    @staticmethod
    def frame(objectives, statuses=None):
        frame = pd.DataFrame({
            "objective": objectives,
            "status": statuses or ["Optimal"] * len(objectives),
        })
        frame["objective_change"] = frame["objective"].diff()
        return frame

    @pytest.mark.parametrize("objectives, expected", [
        ([1.0], True),
        ([1.0, 0.8], True),
        ([1.0, 0.8, 0.7, 0.65], True),
        ([1.0, 0.8, 0.8], True),
        ([1.0, 0.9, 0.5], False),
        ([1.0, 1.2, 0.9], False),
    ])
    def test_last_change_against_first(self, objectives, expected):
        assert sweep_converged(self.frame(objectives)) is expected

    def test_failed_step_fails_the_sweep(self):
        assert not sweep_converged(self.frame([1.0, 0.8, 0.75], ["Optimal", "Infeasible", "Optimal"]))


class TestNumericalFailure:

    def test_own_exit_code(self, tmp_path, monkeypatch):
        def broken(*args, **kwargs):
            raise NumericalFailure("basis is numerically singular")

        monkeypatch.setattr("robust_fractionation.cli.solve_var", broken)
        assert main(["solve-var", "--config", str(var_config(tmp_path))]) == EXIT_NUMERICAL
        assert EXIT_NUMERICAL not in (EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_VERIFICATION)


class TestConfigErrors:

    def test_missing_file(self, tmp_path):
        assert main(["solve-var", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_schema_error(self, tmp_path):
        path = write_config(tmp_path, {"kind": "var", "grid": GRID, "var": {"alpha": 0.5}})
        assert main(["solve-var", "--config", str(path)]) == EXIT_CONFIG

    def test_kind_mismatch(self, tmp_path):
        assert main(["solve-generic", "--config", str(var_config(tmp_path))]) == EXIT_CONFIG

    def test_bad_delta_override(self, tmp_path):
        assert main(["solve-var", "--config", str(var_config(tmp_path)), "--delta", "-0.1"]) == EXIT_CONFIG

    def test_bad_delta_list(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["sweep", "--config", str(var_config(tmp_path)), "--deltas", "0.1,abc"])
