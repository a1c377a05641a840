"""
JSON Export for run reports and certificates.
Certificates carry their full ambiguity block (grid, moments, bin caps, confidence sets and
envelope) so `verify` can re-check them without the model that produced them.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from ..errors import ParseError, SchemaError
from ..models.ambiguity import (
    AmbiguityBlock,
    ConfidenceSet,
    EnvelopeFn,
    EnvelopeKind,
    MomentSpec,
    build_grid,
)
from ..verification.sip_check import Certificate

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CERTIFICATE_FORMAT = "robust-fractionation-certificate"
CERTIFICATE_VERSION = 1


def _plain(value):
    """Convert numpy scalars and arrays for json."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_report(report: Dict, path: PathLike) -> Path:
    """Write a run report as indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(report), indent=2) + "\n")
    logger.info(f"Wrote report {path}")
    return path


# =============================================================================
# Certificates
# =============================================================================

def block_to_dict(block: AmbiguityBlock) -> Dict:
    grid = block.grid
    envelope = None
    if block.envelope is not None:
        env = block.envelope
        envelope = {
            "kind": env.kind.value,
            "mu_minus": env.mu_minus,
            "mu_plus": env.mu_plus,
            "sigma": env.sigma,
            "table": [list(p) for p in env.table],
        }
    return {
        "grid": {"t0": grid.t0, "t_max": grid.t_max, "delta": grid.delta},
        "moments": None if block.moments is None else {
            "mu_minus": block.moments.mu_minus,
            "mu_plus": block.moments.mu_plus,
            "beta": block.moments.beta,
            "var_rhs": block.moments.var_rhs,
        },
        "bin_caps": block.bin_caps,
        "confidence_sets": [{"lo": cs.lo, "hi": cs.hi, "eps": cs.eps} for cs in block.confidence_sets],
        "envelope": envelope,
    }


def block_from_dict(data: Dict) -> AmbiguityBlock:
    grid = build_grid(data["grid"]["t0"], data["grid"]["t_max"], data["grid"]["delta"])
    moments = None if data.get("moments") is None else MomentSpec(**data["moments"])
    caps = np.asarray(data["bin_caps"], dtype=float)
    caps.setflags(write=False)
    sets = tuple(ConfidenceSet(cs["lo"], cs["hi"], cs["eps"]) for cs in data.get("confidence_sets", []))
    envelope = None
    env = data.get("envelope")
    if env is not None:
        envelope = EnvelopeFn(
            EnvelopeKind(env["kind"]),
            mu_minus=env["mu_minus"],
            mu_plus=env["mu_plus"],
            sigma=env["sigma"],
            table=tuple(tuple(p) for p in env["table"]),
        )
    return AmbiguityBlock(grid, moments, caps, sets, envelope)


def certificate_to_dict(cert: Certificate) -> Dict:
    return {
        "name": cert.name,
        "height": cert.height,
        "x_minus": cert.x_minus,
        "x_plus": cert.x_plus,
        "y": cert.y,
        "z": cert.z,
        "w": cert.w,
        "block": block_to_dict(cert.block),
    }


def certificate_from_dict(data: Dict) -> Certificate:
    return Certificate(
        name=data["name"],
        height=float(data["height"]),
        x_minus=float(data["x_minus"]),
        x_plus=float(data["x_plus"]),
        y=np.asarray(data["y"], dtype=float),
        z=np.asarray(data["z"], dtype=float),
        w=np.asarray(data.get("w", []), dtype=float),
        block=block_from_dict(data["block"]),
    )


def write_certificates(certificates: List[Certificate], path: PathLike, meta: Optional[Dict] = None) -> Path:
    """Write a certificate bundle."""
    bundle = {
        "format": CERTIFICATE_FORMAT,
        "version": CERTIFICATE_VERSION,
        "meta": meta or {},
        "certificates": [certificate_to_dict(c) for c in certificates],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(bundle), indent=1) + "\n")
    logger.info(f"Wrote {len(certificates)} certificate(s) to {path}")
    return path


def read_certificates(path: PathLike) -> List[Certificate]:
    """
    Read a certificate bundle written by write_certificates.

    Raises:
        ParseError: the file is not valid JSON
        SchemaError: a required key is missing or the format tag is wrong
    """
    text = Path(path).read_text()
    try:
        bundle = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid certificate file {path}: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(bundle, dict) or bundle.get("format") != CERTIFICATE_FORMAT:
        raise SchemaError("format", f"expected {CERTIFICATE_FORMAT!r}")
    if "certificates" not in bundle:
        raise SchemaError("certificates", "missing")
    certificates = []
    for i, entry in enumerate(bundle["certificates"]):
        try:
            certificates.append(certificate_from_dict(entry))
        except KeyError as exc:
            raise SchemaError(f"certificates[{i}].{exc.args[0]}", "missing") from exc
    logger.info(f"Read {len(certificates)} certificate(s) from {path}")
    return certificates


__all__ = [
    "write_report",
    "block_to_dict",
    "block_from_dict",
    "certificate_to_dict",
    "certificate_from_dict",
    "write_certificates",
    "read_certificates",
]
