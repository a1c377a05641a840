"""
Run Configuration.
Parses the JSON run file, checks every key against the schema documented in CONFIG.md and
builds the problem objects. Command-line overrides (grid step, moment control) are applied
when the problem objects are built, so one parsed file serves a whole delta sweep.
"""

import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .data.peg_separation import (
    DEFAULT_EPS_MU,
    EPS_SIGMA,
    GRID_DELTA,
    GRID_T0,
    GRID_T_MAX,
    NTP,
    REQUIRED_PURITY,
    SWEEP_DELTAS,
    SWEEP_T_MAX,
)
from .errors import ConfigError, DroError, ParseError, SchemaError
from .models.ambiguity import (
    AmbiguityBlock,
    ConfidenceSet,
    EnvelopeFn,
    MomentSpec,
    build_block,
    build_grid,
    validate_block,
)
from .models.chroma_model import ChromaConfig, SpeciesSpec
from .models.generic_model import GenericConfig, LinearRow
from .models.var_model import VarConfig
from .solver.milp_model import BranchingRule, NodeSelection, SolverOptions
from .utils.calculations import step_count

logger = logging.getLogger(__name__)

KINDS = ("chroma", "var", "generic")
THREADS_ENV = "DRO_THREADS"
DEFAULT_OUTPUT_DIR = "results"

# Allowed keys per section; a nested dict describes a sub-object, None a leaf value
BLOCK_SCHEMA = {
    "envelope": {"kind": None, "mu_minus": None, "mu_plus": None, "sigma": None, "table": None},
    "bin_caps": None,
    "moments": {"mu_minus": None, "mu_plus": None, "beta": None, "var_rhs": None, "sigma": None, "eps_sigma": None},
    "confidence_sets": None,
}
SPECIES_KEYS = {"s", "mu", "mu_minus", "mu_plus", "sigma", "q0", "desired"}
SCHEMA = {
    "kind": None,
    "chroma": {
        "eps_mu": None,
        "moment_control": None,
        "purity": None,
        "ntp": None,
        "eps_sigma": None,
        "q0": None,
        "species": None,
    },
    "var": {"alpha": None, "block": BLOCK_SCHEMA},
    "generic": {
        "block": BLOCK_SCHEMA,
        "rhs": None,
        "x_lower": None,
        "x_upper": None,
        "rows": None,
        "objective": None,
        "maximize": None,
        "height": None,
        "height_terms": None,
    },
    "grid": {"t0": None, "t_max": None, "delta": None},
    "solver": {
        "int_tol": None,
        "feas_tol": None,
        "rel_gap": None,
        "gap_limit": None,
        "node_limit": None,
        "time_limit": None,
        "branching": None,
        "node_selection": None,
    },
    "output": {"dir": None, "lp": None, "workbook": None, "refine": None},
    "sweep": {"deltas": None, "t_max": None},
}


def check_keys(data: Any, schema: Dict, path: str = "") -> None:
    """
    Reject keys the schema does not name.

    Raises:
        SchemaError: with the dotted path of the first unknown key or of a non-object section
    """
    if not isinstance(data, dict):
        raise SchemaError(path or "<root>", "expected an object")
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else key
        if key not in schema:
            raise SchemaError(dotted, "unknown key")
        sub = schema[key]
        if isinstance(sub, dict) and value is not None:
            check_keys(value, sub, dotted)


@contextmanager
def _section(path: str):
    """Report missing keys and invalid values below ``path`` as SchemaError."""
    try:
        yield
    except ConfigError:
        raise
    except KeyError as exc:
        raise SchemaError(f"{path}.{exc.args[0]}", "missing") from exc
    except (DroError, ValueError, TypeError) as exc:
        raise SchemaError(path, str(exc)) from exc


def _number(section: Dict, key: str, path: str, default=None, positive: bool = False) -> Optional[float]:
    value = section.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}.{key}", f"expected a number, got {value!r}")
    if positive and not value > 0:
        raise SchemaError(f"{path}.{key}", f"must be positive, got {value}")
    return float(value)


def _flag(section: Dict, key: str, path: str, default: bool) -> bool:
    value = section.get(key, default)
    if not isinstance(value, bool):
        raise SchemaError(f"{path}.{key}", f"expected true or false, got {value!r}")
    return value


# =============================================================================
# Section builders
# =============================================================================

def solver_options(section: Optional[Dict]) -> SolverOptions:
    section = section or {}
    opts = SolverOptions()
    for key in ("int_tol", "feas_tol", "rel_gap", "gap_limit", "time_limit"):
        if key in section:
            setattr(opts, key, _number(section, key, "solver", positive=True))
    if "node_limit" in section:
        value = section["node_limit"]
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise SchemaError("solver.node_limit", f"expected a positive integer, got {value!r}")
        opts.node_limit = value
    for key, enum in (("branching", BranchingRule), ("node_selection", NodeSelection)):
        if key in section:
            try:
                setattr(opts, key, enum(section[key]))
            except ValueError as exc:
                allowed = [e.value for e in enum]
                raise SchemaError(f"solver.{key}", f"expected one of {allowed}") from exc
    return opts


def grid_settings(section: Optional[Dict], defaults: Optional[Dict] = None) -> Dict[str, float]:
    """t0, t_max and delta from the grid section, falling back to ``defaults``."""
    defaults = defaults or {}
    section = section or {}
    values = {}
    for key in ("t0", "t_max", "delta"):
        value = _number(section, key, "grid", defaults.get(key), positive=(key == "delta"))
        if value is None:
            raise SchemaError(f"grid.{key}", "missing")
        values[key] = value
    return values


def check_sweep_deltas(deltas: List[float], t0: float, t_max: float) -> None:
    """
    Sweep steps must strictly decrease and each must divide [t0, t_max].

    Raises:
        SchemaError: on sweep.deltas
    """
    for coarse, fine in zip(deltas, deltas[1:]):
        if not fine < coarse:
            raise SchemaError("sweep.deltas", f"steps must strictly decrease, got {coarse} then {fine}")
    for delta in deltas:
        _, divisible = step_count(t0, t_max, delta)
        if not divisible:
            raise SchemaError("sweep.deltas", f"step {delta} does not divide the grid span [{t0}, {t_max}]")


def block_from_config(section: Dict, grid_cfg: Dict[str, float], path: str) -> AmbiguityBlock:
    """Build an ambiguity block from its config section on the given grid."""
    with _section("grid"):
        grid = build_grid(grid_cfg["t0"], grid_cfg["t_max"], grid_cfg["delta"])

    moments = None
    m = section.get("moments")
    if m is not None:
        with _section(f"{path}.moments"):
            if "beta" in m or "var_rhs" in m:
                moments = MomentSpec(float(m["mu_minus"]), float(m["mu_plus"]), float(m["beta"]), float(m["var_rhs"]))
            else:
                moments = MomentSpec.mccormick(
                    float(m["mu_minus"]), float(m["mu_plus"]), float(m["sigma"]), float(m.get("eps_sigma", EPS_SIGMA))
                )

    sets = []
    for i, cs in enumerate(section.get("confidence_sets") or []):
        if not isinstance(cs, dict) or set(cs) != {"lo", "hi", "eps"}:
            raise SchemaError(f"{path}.confidence_sets[{i}]", "expected keys lo, hi, eps")
        sets.append(ConfidenceSet(float(cs["lo"]), float(cs["hi"]), float(cs["eps"])))

    env = section.get("envelope")
    caps = section.get("bin_caps")
    if env is None and caps is None:
        raise SchemaError(f"{path}.envelope", "an envelope or bin_caps is required")
    envelope = None
    if env is not None:
        with _section(f"{path}.envelope"):
            kind = env.get("kind", "piecewise-normal")
            if kind == "piecewise-normal":
                envelope = EnvelopeFn.piecewise_normal(
                    float(env["mu_minus"]), float(env["mu_plus"]), float(env["sigma"])
                )
            elif kind == "tabulated":
                envelope = EnvelopeFn.tabulated(env["table"])
            else:
                raise SchemaError(f"{path}.envelope.kind", f"unknown envelope kind {kind!r}")

    with _section(path):
        if caps is None:
            return build_block(grid, envelope, moments, tuple(sets))
        caps = np.asarray(caps, dtype=float)
        caps.setflags(write=False)
        block = AmbiguityBlock(grid, moments, caps, tuple(sets), envelope)
        validate_block(block)
        return block


def species_from_config(entries: List[Dict]) -> List[SpeciesSpec]:
    species = []
    for i, entry in enumerate(entries):
        path = f"chroma.species[{i}]"
        unknown = sorted(set(entry) - SPECIES_KEYS)
        if unknown:
            raise SchemaError(f"{path}.{unknown[0]}", "unknown key")
        with _section(path):
            species.append(
                SpeciesSpec(
                    s=int(entry["s"]),
                    mu=float(entry["mu"]),
                    mu_minus=float(entry["mu_minus"]),
                    mu_plus=float(entry["mu_plus"]),
                    sigma=float(entry["sigma"]),
                    q0=float(entry["q0"]),
                    desired=bool(entry.get("desired", False)),
                )
            )
    return species


# =============================================================================
# Run configuration
# =============================================================================

@dataclass
class RunConfig:
    """Parsed run file plus command-line overrides."""
    kind: str
    data: Dict = field(repr=False)
    solver: SolverOptions = field(default_factory=SolverOptions)
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    lp: bool = False
    workbook: bool = False
    refine: List[int] = field(default_factory=lambda: [1, 2])
    sweep_deltas: List[float] = field(default_factory=lambda: list(SWEEP_DELTAS))
    sweep_t_max: Optional[float] = None
    delta: Optional[float] = None
    moment_control: Optional[bool] = None
    source: Optional[Path] = None

    def grid(self, delta: Optional[float] = None, t_max: Optional[float] = None) -> Dict[str, float]:
        defaults = {"t0": GRID_T0, "t_max": GRID_T_MAX, "delta": GRID_DELTA} if self.kind == "chroma" else {}
        values = grid_settings(self.data.get("grid"), defaults)
        if self.delta is not None:
            values["delta"] = self.delta
        if delta is not None:
            values["delta"] = delta
        if t_max is not None:
            values["t_max"] = t_max
        if not values["delta"] > 0:
            raise SchemaError("grid.delta", f"must be positive, got {values['delta']}")
        return values

    def chroma_config(self, delta: Optional[float] = None, t_max: Optional[float] = None) -> ChromaConfig:
        section = self.data.get("chroma") or {}
        g = self.grid(delta, t_max)
        moment_control = _flag(section, "moment_control", "chroma", True)
        if self.moment_control is not None:
            moment_control = self.moment_control
        purity = _number(section, "purity", "chroma", REQUIRED_PURITY)
        eps_sigma = _number(section, "eps_sigma", "chroma", EPS_SIGMA)
        with _section("chroma"):
            if section.get("species"):
                cfg = ChromaConfig(
                    species_from_config(section["species"]),
                    purity=purity,
                    eps_sigma=eps_sigma,
                    t0=g["t0"],
                    t_max=g["t_max"],
                    delta=g["delta"],
                    moment_control=moment_control,
                )
            else:
                q0 = section.get("q0")
                cfg = ChromaConfig.reference(
                    eps_mu=_number(section, "eps_mu", "chroma", DEFAULT_EPS_MU),
                    moment_control=moment_control,
                    delta=g["delta"],
                    t0=g["t0"],
                    t_max=g["t_max"],
                    q0=None if q0 is None else {int(s): float(v) for s, v in q0.items()},
                    purity=purity,
                    ntp=_number(section, "ntp", "chroma", NTP, positive=True),
                    eps_sigma=eps_sigma,
                )
            cfg.validate()
            cfg.grid()
        return cfg

    def _block(self, section: Dict, path: str, delta: Optional[float]) -> AmbiguityBlock:
        if "block" not in section:
            raise SchemaError(f"{path}.block", "missing")
        block = block_from_config(section["block"], self.grid(delta), f"{path}.block")
        if self.moment_control is False:
            block = block.with_moments(None)
        return block

    def var_config(self, delta: Optional[float] = None) -> VarConfig:
        section = self.data.get("var")
        if section is None:
            raise SchemaError("var", "missing")
        alpha = _number(section, "alpha", "var")
        if alpha is None:
            raise SchemaError("var.alpha", "missing")
        cfg = VarConfig(alpha, self._block(section, "var", delta))
        with _section("var"):
            cfg.validate()
        return cfg

    def generic_config(self, delta: Optional[float] = None) -> GenericConfig:
        section = self.data.get("generic")
        if section is None:
            raise SchemaError("generic", "missing")
        rhs = _number(section, "rhs", "generic")
        if rhs is None:
            raise SchemaError("generic.rhs", "missing")
        block = self._block(section, "generic", delta)
        with _section("generic"):
            rows = [
                LinearRow({k: float(v) for k, v in r["coefs"].items()}, r["sense"], float(r["rhs"]))
                for r in section.get("rows", [])
            ]
            height_terms = section.get("height_terms")
            cfg = GenericConfig(
                block=block,
                rhs=rhs,
                x_lower=[float(v) for v in section.get("x_lower", [])],
                x_upper=[float(v) for v in section.get("x_upper", [])],
                rows=rows,
                objective={k: float(v) for k, v in section.get("objective", {}).items()},
                maximize=_flag(section, "maximize", "generic", True),
                height=float(section.get("height", 1.0)),
                height_terms=None if height_terms is None else {k: float(v) for k, v in height_terms.items()},
            )
            cfg.validate()
        return cfg

    def sweep_steps(self, deltas: Optional[List[float]] = None) -> List[float]:
        """Checked sweep steps; the configured ones when ``deltas`` is omitted."""
        deltas = list(deltas or self.sweep_deltas)
        span = self.grid(t_max=self.sweep_t_max)
        check_sweep_deltas(deltas, span["t0"], span["t_max"])
        return deltas

    def problem(self, delta: Optional[float] = None):
        """Problem configuration of this run's kind."""
        if self.kind == "chroma":
            return self.chroma_config(delta)
        if self.kind == "var":
            return self.var_config(delta)
        return self.generic_config(delta)


def config_from_dict(data: Any, source: Optional[Path] = None) -> RunConfig:
    """
    Validate a decoded run file and build its RunConfig.

    Raises:
        SchemaError: unknown or missing keys, or values the models reject
    """
    check_keys(data, SCHEMA)
    if "kind" not in data:
        raise SchemaError("kind", "missing")
    kind = data["kind"]
    if kind not in KINDS:
        raise SchemaError("kind", f"expected one of {list(KINDS)}, got {kind!r}")

    output = data.get("output") or {}
    refine = output.get("refine", [1, 2])
    if isinstance(refine, int):
        refine = [refine]
    if not refine or any(isinstance(r, bool) or not isinstance(r, int) or r < 1 for r in refine):
        raise SchemaError("output.refine", f"expected positive integers, got {refine!r}")

    sweep = data.get("sweep") or {}
    deltas = sweep.get("deltas", list(SWEEP_DELTAS))
    if not isinstance(deltas, list) or any(isinstance(d, bool) or not isinstance(d, (int, float)) or d <= 0 for d in deltas):
        raise SchemaError("sweep.deltas", f"expected a list of positive numbers, got {deltas!r}")
    default_sweep_t_max = SWEEP_T_MAX if kind == "chroma" else None

    cfg = RunConfig(
        kind=kind,
        data=data,
        solver=solver_options(data.get("solver")),
        output_dir=Path(output.get("dir", DEFAULT_OUTPUT_DIR)),
        lp=_flag(output, "lp", "output", False),
        workbook=_flag(output, "workbook", "output", False),
        refine=list(refine),
        sweep_deltas=[float(d) for d in deltas],
        sweep_t_max=_number(sweep, "t_max", "sweep", default_sweep_t_max),
        source=source,
    )
    with _section("solver"):
        cfg.solver.validate()
    cfg.problem()
    if "deltas" in sweep:
        cfg.sweep_steps()
    logger.debug(f"Parsed {kind} configuration from {source or '<dict>'}")
    return cfg


def parse_config(path: Union[str, Path]) -> RunConfig:
    """
    Parse a JSON run file.

    Raises:
        ParseError: malformed JSON, with line and column
        SchemaError: unknown or missing keys, or invalid values
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc.msg}", exc.lineno, exc.colno) from exc
    return config_from_dict(data, path)


def worker_count() -> int:
    """Worker processes allowed by DRO_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, value)


__all__ = [
    "KINDS",
    "SCHEMA",
    "RunConfig",
    "check_keys",
    "solver_options",
    "grid_settings",
    "check_sweep_deltas",
    "block_from_config",
    "config_from_dict",
    "parse_config",
    "worker_count",
]
