"""
CPLEX LP format writer.

Numbers use 17 significant digits so values round-trip exactly. Names are sanitized:
square brackets become parentheses, any other character outside the LP name alphabet
(spaces included) becomes an underscore, and names that would start with a digit, a
period or the letter e get a leading underscore.
"""

import logging
import re
from pathlib import Path
from typing import List, Set, Union

import numpy as np

from .milp_model import MilpModel, ObjSense, RowSense

logger = logging.getLogger(__name__)

_INVALID = re.compile(r"[^A-Za-z0-9!\"#$%&()/,.;?@_`'{}|~]")
_SENSE = {RowSense.LE: "<=", RowSense.GE: ">=", RowSense.EQ: "="}


def _num(value: float) -> str:
    if value == 0:
        value = 0.0
    return f"{value:.17g}"


def sanitize_name(name: str) -> str:
    """Map a model name onto the LP name alphabet."""
    cleaned = _INVALID.sub("_", name.replace("[", "(").replace("]", ")"))
    if not cleaned or cleaned[0].isdigit() or cleaned[0] in ".eE":
        cleaned = "_" + cleaned
    return cleaned


def unique_names(names: List[str]) -> List[str]:
    """Sanitized names with a numeric suffix appended until each one is distinct."""
    seen: Set[str] = set()
    result = []
    for k, name in enumerate(names):
        clean = sanitize_name(name)
        candidate, suffix = clean, k
        while candidate in seen:
            candidate = f"{clean}_{suffix}"
            suffix += 1
        seen.add(candidate)
        result.append(candidate)
    return result


def _terms(lines: List[str], indices: np.ndarray, coefs: np.ndarray, names: List[str]) -> None:
    if len(indices) == 0:
        lines.append(f"   0 {names[0]}" if names else "   0")
        return
    for j, c in zip(indices, coefs):
        lines.append(f"   {'+' if c >= 0 else ''}{_num(c)} {names[j]}")


def export_lp_text(model: MilpModel) -> str:
    """
    Render a model in CPLEX LP format.

    Every variable is declared in the Bounds section, binaries are listed again under
    Binaries.
    """
    model.validate()
    var_names = unique_names([v.name for v in model.variables])
    row_names = unique_names([r.name for r in model.rows])

    lines = [f"\\* {model.name} *\\", ""]
    lines.append("Maximize" if model.obj_sense is ObjSense.MAXIMIZE else "Minimize")
    lines.append(" obj:")
    obj_idx = np.array(sorted(model.objective), dtype=np.int64)
    obj_val = np.array([model.objective[j] for j in obj_idx], dtype=float)
    _terms(lines, obj_idx, obj_val, var_names)
    lines.append("")

    lines.append("Subject To")
    for name, row in zip(row_names, model.rows):
        lines.append(f" {name}:")
        _terms(lines, row.indices, row.coefs, var_names)
        lines.append(f"   {_SENSE[row.sense]} {_num(row.rhs)}")
    lines.append("")

    lines.append("Bounds")
    for name, var in zip(var_names, model.variables):
        lo, up = var.lb, var.ub
        if lo == up:
            lines.append(f"   {name} = {_num(lo)}")
        elif np.isinf(lo) and np.isinf(up):
            lines.append(f"   {name} free")
        else:
            left = "-inf" if np.isinf(lo) else _num(lo)
            right = "+inf" if np.isinf(up) else _num(up)
            lines.append(f"   {left} <= {name} <= {right}")
    lines.append("")

    binaries = [name for name, var in zip(var_names, model.variables) if var.is_binary]
    if binaries:
        lines.append("Binaries")
        lines.extend(f"   {name}" for name in binaries)
        lines.append("")

    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(model: MilpModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(export_lp_text(model))
    logger.info(f"Wrote LP export {path} ({model.num_variables} variables, {model.num_rows} rows)")
    return path


__all__ = ["export_lp_text", "write_lp", "sanitize_name", "unique_names"]
