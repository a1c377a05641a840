"""
Command-line interface.

    python -m robust_fractionation solve-chroma [--config run.json] [--delta 0.001] [--no-moments]
    python -m robust_fractionation solve-var --config var.json
    python -m robust_fractionation solve-generic --config generic.json
    python -m robust_fractionation verify results/certificates.json
    python -m robust_fractionation export-lp --config run.json
    python -m robust_fractionation sweep --config run.json --deltas 0.008,0.004,0.002

Exit codes: 0 Optimal, 1 configuration error, 2 Infeasible, 3 solver limit reached,
4 verification failure, 5 numerical failure in the LP solver, 6 sweep did not converge.
"""

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

from .config import RunConfig, config_from_dict, parse_config, worker_count
from .errors import ConfigError, DroError, NumericalFailure, SandwichViolation, VerificationFailure
from .exports.csv_export import emit_chromatogram_csv, write_sweep_csv
from .exports.excel_export import write_workbook
from .exports.json_export import read_certificates, write_certificates, write_report
from .models.chroma_model import build_chroma_mip, chromatogram_frame, purity_certificate, solve_fractionation
from .models.generic_model import build_generic_mip, solve_generic
from .models.var_model import build_var_mip, solve_var
from .solver.lp_export import write_lp
from .solver.milp_model import MilpModel, SolveStatus
from .verification.primal_oracle import sandwich_check
from .verification.sip_check import check_sip

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3
EXIT_VERIFICATION = 4
EXIT_NUMERICAL = 5
EXIT_NOT_CONVERGED = 6

# The last objective change may exceed the first by this much and still count as settled
CONVERGENCE_TOL = 1e-9

COMMAND_KINDS = {"solve-chroma": "chroma", "solve-var": "var", "solve-generic": "generic"}


def exit_code(status: SolveStatus) -> int:
    if status is SolveStatus.OPTIMAL:
        return EXIT_OK
    if status.is_limit:
        return EXIT_LIMIT
    return EXIT_INFEASIBLE


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT)


# =============================================================================
# Solve
# =============================================================================

@dataclass
class RunReport:
    """Outcome of one configured run."""
    kind: str
    status: Optional[SolveStatus]
    exit_code: int
    report: Dict = field(repr=False)
    paths: Dict[str, Path] = field(default_factory=dict)


def build_model(cfg: RunConfig, delta: Optional[float] = None) -> MilpModel:
    """The MILP a run would solve, without solving it."""
    problem = cfg.problem(delta)
    if cfg.kind == "chroma":
        return build_chroma_mip(problem).model
    if cfg.kind == "var":
        return build_var_mip(problem)[0]
    return build_generic_mip(problem).model


def solve_problem(kind: str, problem, opts):
    """
    Solve one problem configuration.

    Returns:
        (status, result object, certificates, solution)
    """
    if kind == "chroma":
        result = solve_fractionation(problem, opts)
        return result.status, result, result.certificates, result.solution
    if kind == "var":
        result = solve_var(problem, opts)
    else:
        result = solve_generic(problem, opts)
    certificates = [result.certificate] if result.certificate is not None else []
    return result.status, result, certificates, result.solution


def run(cfg: RunConfig) -> RunReport:
    """
    Solve, verify and write every output of a configured run.

    check_sip runs inside the model solvers; Optimal results are additionally compared
    against the atomic primal oracle at each refinement in ``cfg.refine``.
    """
    out = cfg.output_dir
    problem = cfg.problem()
    report: Dict = {
        "kind": cfg.kind,
        "config": str(cfg.source) if cfg.source else None,
        "options": cfg.solver.to_dict(),
        "grid": cfg.grid(),
    }
    paths: Dict[str, Path] = {}

    if cfg.lp:
        paths["lp"] = write_lp(build_model(cfg), out / "model.lp")

    try:
        status, result, certificates, solution = solve_problem(cfg.kind, problem, cfg.solver)
    except VerificationFailure as exc:
        logger.error(f"Verification failed: {exc}")
        report.update(status="VerificationFailure", error=str(exc))
        paths["report"] = write_report(report, out / "report.json")
        return RunReport(cfg.kind, None, EXIT_VERIFICATION, report, paths)

    report["status"] = status.value
    report["solver"] = solution.to_dict() if solution is not None else None
    report["result"] = result.to_dict()
    report["model_sizes"] = result.model_sizes
    report["family_counts"] = result.family_counts
    code = exit_code(status)

    verification: Dict[str, Dict] = {}
    for cert in certificates:
        entry = {"check_sip": check_sip(cert).to_dict()}
        if status is SolveStatus.OPTIMAL:
            try:
                entry["sandwich"] = sandwich_check(cert, cfg.refine).to_dict()
            except SandwichViolation as exc:
                logger.error(f"Sandwich check failed: {exc}")
                entry["sandwich"] = {"error": str(exc)}
                code = EXIT_VERIFICATION
        verification[cert.name] = entry
    report["verification"] = verification

    chromatogram = None
    if cfg.kind == "chroma" and status is SolveStatus.OPTIMAL:
        report["result"]["purity_certificate"] = purity_certificate(result, max(cfg.refine))
        chromatogram = chromatogram_frame(problem, result)
        paths["chromatogram"] = emit_chromatogram_csv(chromatogram, out / "chromatogram.csv")
    if certificates:
        paths["certificates"] = write_certificates(
            certificates, out / "certificates.json", {"kind": cfg.kind, "status": status.value}
        )
    paths["report"] = write_report(report, out / "report.json")
    if cfg.workbook:
        paths["workbook"] = write_workbook(out / "run.xlsx", report, chromatogram=chromatogram)
    logger.info(f"Run finished: {status.value} (exit {code})")
    return RunReport(cfg.kind, status, code, report, paths)


# =============================================================================
# Sweep
# =============================================================================

def _sweep_point(args: Tuple[RunConfig, float]) -> Dict:
    cfg, delta = args
    if cfg.kind == "chroma":
        problem = cfg.chroma_config(delta, cfg.sweep_t_max)
    else:
        problem = cfg.problem(delta)
    started = time.monotonic()
    status, result, _, solution = solve_problem(cfg.kind, problem, cfg.solver)
    wall_time = time.monotonic() - started
    if cfg.kind == "var":
        objective = result.bound
    else:
        objective = result.objective
    row = {
        "delta": delta,
        "variables": result.model_sizes.get("variables"),
        "rows": result.model_sizes.get("rows"),
        "binaries": result.model_sizes.get("binaries"),
        "status": status.value,
        "objective": objective,
        "wall_time": wall_time,
        "nodes": solution.nodes if solution is not None else None,
    }
    if cfg.kind == "chroma":
        row["x_minus"] = result.x_minus
        row["x_plus"] = result.x_plus
    logger.info(f"Sweep delta={delta}: {status.value} objective={objective}")
    return row


def sweep(cfg: RunConfig, deltas: Optional[List[float]] = None) -> pd.DataFrame:
    """
    Solve the configured problem for each grid step.

    Returns:
        DataFrame with one row per delta and the change of the objective against the previous
        (coarser) step; ``attrs["converged"]`` holds the sweep_converged verdict

    Raises:
        SchemaError: steps that do not strictly decrease or do not divide the grid span
    """
    deltas = cfg.sweep_steps(deltas)
    workers = min(worker_count(), len(deltas))
    jobs = [(cfg, d) for d in deltas]
    if workers > 1:
        logger.info(f"Sweeping {len(deltas)} grid steps on {workers} processes")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    frame = pd.DataFrame(rows)
    frame["objective_change"] = pd.to_numeric(frame["objective"], errors="coerce").diff()
    frame.attrs["converged"] = sweep_converged(frame)
    return frame


def sweep_converged(frame: pd.DataFrame) -> bool:
    """Every step solved to optimality and the last objective change is no larger than the first."""
    if not (frame["status"] == SolveStatus.OPTIMAL.value).all():
        return False
    changes = frame["objective_change"].abs().dropna()
    if len(changes) < 2:
        return True
    return bool(changes.iloc[-1] <= changes.iloc[0] + CONVERGENCE_TOL)


def sweep_summary(cfg: RunConfig, frame: pd.DataFrame) -> Dict:
    changes = frame["objective_change"].abs().dropna()
    return {
        "kind": cfg.kind,
        "status": "sweep",
        "deltas": [float(d) for d in frame["delta"]],
        "statuses": list(frame["status"]),
        "first_change": float(changes.iloc[0]) if len(changes) else None,
        "last_change": float(changes.iloc[-1]) if len(changes) else None,
        "converged": bool(frame.attrs["converged"]),
    }


# =============================================================================
# Verify
# =============================================================================

def verify_file(path: Path, refine: List[int]) -> int:
    """Re-check every certificate of a bundle; exit code 0 when all pass, 4 otherwise."""
    code = EXIT_OK
    for cert in read_certificates(path):
        sip = check_sip(cert)
        if not sip.feasible:
            logger.error(f"{cert.name}: continuum check failed, worst {sip.worst_value:.3e} at t={sip.witness:.6g}")
            code = EXIT_VERIFICATION
            continue
        try:
            sandwich = sandwich_check(cert, refine)
        except SandwichViolation as exc:
            logger.error(str(exc))
            code = EXIT_VERIFICATION
            continue
        logger.info(f"{cert.name}: verified (dual objective {sandwich.dual_value:.6g})")
    return code


# =============================================================================
# Entry point
# =============================================================================

def _deltas(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid delta list {text!r}") from exc
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError(f"deltas must be positive, got {text!r}")
    return values


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="robust_fractionation",
        description="Safe MILP approximations of distributionally robust indicator constraints",
    )
    parser.add_argument("--log-level", default="INFO", help="Logging level (default INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub, config_required: bool) -> None:
        sub.add_argument("--config", type=Path, required=config_required, help="JSON run configuration")
        sub.add_argument("--delta", type=float, help="Override the grid step")
        sub.add_argument("--no-moments", action="store_true", help="Drop the moment constraints")
        sub.add_argument("--out", type=Path, help="Output directory")
        sub.add_argument("--time-limit", type=float, help="Solver time limit in seconds")
        sub.add_argument("--gap", type=float, help="Stop at this relative gap")

    for command, kind in COMMAND_KINDS.items():
        sub = commands.add_parser(command, help=f"Solve a {kind} problem")
        common(sub, config_required=(kind != "chroma"))
        sub.add_argument("--lp", action="store_true", help="Also write the model as CPLEX LP")

    sub = commands.add_parser("export-lp", help="Write the model of a run as CPLEX LP text")
    common(sub, config_required=False)

    sub = commands.add_parser("sweep", help="Solve for a list of grid steps")
    common(sub, config_required=False)
    sub.add_argument("--deltas", type=_deltas, help="Comma-separated grid steps")

    sub = commands.add_parser("verify", help="Re-check a certificate bundle")
    sub.add_argument("certificate", type=Path, help="certificates.json written by a solve")
    sub.add_argument("--refine", type=int, nargs="+", default=[1, 2], help="Atoms per bin for the oracle")
    return parser.parse_args(argv)


def load_run_config(args: argparse.Namespace, kind: Optional[str] = None) -> RunConfig:
    """Parse --config (or default to the reference chromatography run) and apply overrides."""
    if args.config is not None:
        cfg = parse_config(args.config)
    else:
        cfg = config_from_dict({"kind": kind or "chroma"})
    if kind is not None and cfg.kind != kind:
        raise ConfigError(f"{args.config} describes a {cfg.kind} problem, not {kind}")
    if args.delta is not None:
        if not args.delta > 0:
            raise ConfigError(f"--delta must be positive, got {args.delta}")
        cfg.delta = args.delta
    if args.no_moments:
        cfg.moment_control = False
    if args.out is not None:
        cfg.output_dir = args.out
    if args.time_limit is not None:
        cfg.solver.time_limit = args.time_limit
    if args.gap is not None:
        cfg.solver.gap_limit = args.gap
    cfg.solver.validate()
    cfg.problem()
    return cfg


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "verify":
            return verify_file(args.certificate, args.refine)

        cfg = load_run_config(args, COMMAND_KINDS.get(args.command))
        if args.command == "export-lp":
            write_lp(build_model(cfg), cfg.output_dir / "model.lp")
            return EXIT_OK
        if args.command == "sweep":
            frame = sweep(cfg, args.deltas)
            summary = sweep_summary(cfg, frame)
            write_sweep_csv(frame, cfg.output_dir / "sweep.csv")
            write_report(summary, cfg.output_dir / "sweep_report.json")
            if cfg.workbook:
                write_workbook(cfg.output_dir / "sweep.xlsx", summary, sweep=frame)
            print(frame.to_string(index=False))
            if summary["converged"]:
                logger.info(f"Sweep PASS: last change {summary['last_change']} <= first change {summary['first_change']}")
                return EXIT_OK
            logger.warning(
                f"Sweep FAIL: statuses {summary['statuses']}, last change {summary['last_change']} "
                f"exceeds first change {summary['first_change']}"
            )
            return EXIT_NOT_CONVERGED

        cfg.lp = cfg.lp or args.lp
        return run(cfg).exit_code
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except (VerificationFailure, SandwichViolation) as exc:
        logger.error(f"Verification failed: {exc}")
        return EXIT_VERIFICATION
    except NumericalFailure as exc:
        logger.error(f"Numerical failure in the LP solver: {exc}")
        return EXIT_NUMERICAL
    except (DroError, ValueError) as exc:
        logger.error(f"Invalid problem: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
