"""
CSV Export for chromatograms and sweep tables.
"""

import logging
from pathlib import Path
from typing import Union

import pandas as pd

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CHROMATOGRAM_FLOAT_FORMAT = "%.6g"
SWEEP_COLUMNS = ["delta", "variables", "rows", "binaries", "status", "objective", "wall_time"]


def emit_chromatogram_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """
    Write the chromatogram table (t, per-species envelope and density, window flag).

    Raises:
        ValueError: the frame has no ``t`` column
    """
    if "t" not in frame.columns:
        raise ValueError("chromatogram frame needs a 't' column")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CHROMATOGRAM_FLOAT_FORMAT)
    logger.info(f"Wrote chromatogram ({len(frame)} rows) to {path}")
    return path


def write_sweep_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write the delta sweep table; the leading columns follow SWEEP_COLUMNS."""
    missing = [c for c in SWEEP_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"sweep frame lacks columns {missing}")
    ordered = SWEEP_COLUMNS + [c for c in frame.columns if c not in SWEEP_COLUMNS]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame[ordered].to_csv(path, index=False)
    logger.info(f"Wrote sweep table ({len(frame)} rows) to {path}")
    return path


__all__ = ["SWEEP_COLUMNS", "emit_chromatogram_csv", "write_sweep_csv"]
