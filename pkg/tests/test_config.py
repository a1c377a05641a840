"""Tests for run-file parsing and validation."""

import json

import pytest

from robust_fractionation.config import config_from_dict, parse_config, solver_options, worker_count
from robust_fractionation.errors import ConfigError, ParseError, SchemaError
from robust_fractionation.solver.milp_model import BranchingRule


@pytest.fixture
def var_data():
    return {
        "kind": "var",
        "grid": {"t0": 0.0, "t_max": 1.0, "delta": 0.1},
        "var": {"alpha": 0.5, "block": {"bin_caps": [1.0] * 11}},
    }


def schema_key(data):
    with pytest.raises(SchemaError) as info:
        config_from_dict(data)
    return info.value.key


class TestValidConfigs:

    def test_var(self, var_data):
        cfg = config_from_dict(var_data)
        problem = cfg.problem()
        assert cfg.kind == "var"
        assert problem.alpha == 0.5
        assert problem.block.grid.size == 11
        assert cfg.refine == [1, 2]

    def test_mccormick_moments(self, var_data):
        var_data["var"]["block"]["moments"] = {"mu_minus": 0.4, "mu_plus": 0.6, "sigma": 0.1, "eps_sigma": 0.5}
        moments = config_from_dict(var_data).var_config().block.moments
        assert moments.beta == pytest.approx(1.0)
        assert moments.var_rhs == pytest.approx(0.24 - 0.005)

    def test_moment_override(self, var_data):
        var_data["var"]["block"]["moments"] = {"mu_minus": 0.4, "mu_plus": 0.6, "beta": 1.0, "var_rhs": 0.2}
        cfg = config_from_dict(var_data)
        assert cfg.var_config().block.has_moments
        cfg.moment_control = False
        assert not cfg.var_config().block.has_moments

    def test_envelope_block(self, var_data):
        var_data["var"]["block"] = {"envelope": {"mu_minus": 0.45, "mu_plus": 0.55, "sigma": 0.1}}
        block = config_from_dict(var_data).var_config(delta=0.05).block
        assert block.grid.size == 21
        assert block.envelope is not None

    def test_chroma_defaults(self):
        cfg = config_from_dict({"kind": "chroma"})
        problem = cfg.chroma_config()
        assert problem.delta == 0.001
        assert len(problem.species) == 4
        assert cfg.sweep_t_max == pytest.approx(3.752)

    def test_chroma_step_with_matching_window(self):
        cfg = config_from_dict({"kind": "chroma", "grid": {"t_max": 3.752}})
        cfg.delta = 0.002
        assert cfg.chroma_config().grid().size == 477

    def test_generic(self, var_data):
        data = {
            "kind": "generic",
            "grid": var_data["grid"],
            "generic": {
                "block": var_data["var"]["block"],
                "rhs": 0.25,
                "x_lower": [0.0],
                "x_upper": [2.0],
                "rows": [{"coefs": {"x_minus": 1.0}, "sense": "=", "rhs": 0.2}],
                "objective": {"x[0]": 1.0},
                "maximize": False,
                "height": 0.0,
                "height_terms": {"x[0]": 1.0},
            },
        }
        problem = config_from_dict(data).problem()
        assert problem.variable_height
        assert problem.rows[0].sense == "="

    def test_sweep_steps(self, var_data):
        var_data["sweep"] = {"deltas": [0.1, 0.05, 0.025]}
        cfg = config_from_dict(var_data)
        assert cfg.sweep_steps() == [0.1, 0.05, 0.025]
        with pytest.raises(SchemaError):
            cfg.sweep_steps([0.1, 0.2])

    def test_default_chroma_sweep_divides_its_window(self):
        assert config_from_dict({"kind": "chroma"}).sweep_steps() == [0.008, 0.004, 0.002, 0.001]

    def test_solver_section(self):
        opts = solver_options({"branching": "pseudo-cost", "node_limit": 50, "gap_limit": 0.01})
        assert opts.branching is BranchingRule.PSEUDO_COST
        assert opts.node_limit == 50
        assert opts.stop_gap == pytest.approx(0.01)


class TestSchemaErrors:

    def test_unknown_top_level_key(self, var_data):
        var_data["colour"] = "blue"
        assert schema_key(var_data) == "colour"

    def test_unknown_nested_key(self, var_data):
        var_data["var"]["block"]["caps"] = [1.0]
        assert schema_key(var_data) == "var.block.caps"

    def test_missing_kind(self, var_data):
        del var_data["kind"]
        assert schema_key(var_data) == "kind"

    def test_unknown_kind(self, var_data):
        var_data["kind"] = "cvar"
        assert schema_key(var_data) == "kind"

    def test_missing_alpha(self, var_data):
        del var_data["var"]["alpha"]
        assert schema_key(var_data) == "var.alpha"

    def test_alpha_out_of_range(self, var_data):
        var_data["var"]["alpha"] = 1.5
        assert schema_key(var_data) == "var"

    def test_nonpositive_delta(self, var_data):
        var_data["grid"]["delta"] = 0.0
        assert schema_key(var_data) == "grid.delta"

    def test_non_dividing_delta(self, var_data):
        var_data["grid"]["delta"] = 0.3
        assert schema_key(var_data) == "grid"

    def test_missing_envelope_field(self, var_data):
        var_data["var"]["block"] = {"envelope": {"mu_minus": 0.4, "mu_plus": 0.6}}
        assert schema_key(var_data) == "var.block.envelope.sigma"

    def test_block_without_caps(self, var_data):
        var_data["var"]["block"] = {}
        assert schema_key(var_data) == "var.block.envelope"

    def test_bad_branching(self, var_data):
        var_data["solver"] = {"branching": "random"}
        assert schema_key(var_data) == "solver.branching"

    def test_boolean_node_limit(self, var_data):
        var_data["solver"] = {"node_limit": True}
        assert schema_key(var_data) == "solver.node_limit"

    def test_bad_refine(self, var_data):
        var_data["output"] = {"refine": [0]}
        assert schema_key(var_data) == "output.refine"

    def test_bad_species_key(self):
        data = {"kind": "chroma", "chroma": {"species": [{"s": 1, "color": "red"}]}}
        assert schema_key(data) == "chroma.species[0].color"

    @pytest.mark.parametrize("deltas", [[0.05, 0.1], [0.1, 0.1], [0.3], [0.1, 0.03]])
    def test_bad_sweep_steps(self, var_data, deltas):
        var_data["sweep"] = {"deltas": deltas}
        assert schema_key(var_data) == "sweep.deltas"


class TestParseFile:

    def test_round_trip(self, tmp_path, var_data):
        path = tmp_path / "var.json"
        path.write_text(json.dumps(var_data))
        cfg = parse_config(path)
        assert cfg.source == path

    def test_malformed_json_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "kind": "var",\n  oops\n}\n')
        with pytest.raises(ParseError) as info:
            parse_config(path)
        assert info.value.line == 3
        assert info.value.column == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "absent.json")


class TestWorkerCount:

    @pytest.mark.parametrize("raw, expected", [("3", 3), ("0", 1), ("1", 1)])
    def test_values(self, monkeypatch, raw, expected):
        monkeypatch.setenv("DRO_THREADS", raw)
        assert worker_count() == expected

    def test_default(self, monkeypatch):
        monkeypatch.delenv("DRO_THREADS", raising=False)
        assert worker_count() == 1

    def test_invalid(self, monkeypatch):
        monkeypatch.setenv("DRO_THREADS", "many")
        with pytest.raises(ConfigError):
            worker_count()
