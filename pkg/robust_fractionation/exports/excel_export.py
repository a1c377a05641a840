"""
Excel Export for robust fractionation runs.
Generates a workbook with the run summary, model sizes per constraint family, the
verification verdicts and, when available, the delta sweep and chromatogram tables.
"""

import io
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional, Union

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils.dataframe import dataframe_to_rows

logger = logging.getLogger(__name__)

HEADER_FONT = Font(bold=True, size=12, color="FFFFFF")
HEADER_FILL = PatternFill(start_color="3B82F6", end_color="3B82F6", fill_type="solid")
FAIL_FILL = PatternFill(start_color="FFCCCC", end_color="FFCCCC", fill_type="solid")
TIME_FORMAT = "0.0000"


def _header(ws, row: int, labels) -> None:
    for col_idx, label in enumerate(labels, start=1):
        cell = ws.cell(row=row, column=col_idx, value=label)
        cell.font = HEADER_FONT
        cell.fill = HEADER_FILL
        cell.alignment = Alignment(horizontal="center")


def _frame_sheet(wb: Workbook, title: str, frame: pd.DataFrame) -> None:
    ws = wb.create_sheet(title)
    for row_idx, values in enumerate(dataframe_to_rows(frame, index=False, header=True), start=1):
        for col_idx, value in enumerate(values, start=1):
            ws.cell(row=row_idx, column=col_idx, value=value)
    _header(ws, 1, list(frame.columns))
    for col_idx in range(1, len(frame.columns) + 1):
        ws.column_dimensions[ws.cell(row=1, column=col_idx).column_letter].width = 16


def export_to_excel(
    report: Dict,
    sweep: Optional[pd.DataFrame] = None,
    chromatogram: Optional[pd.DataFrame] = None,
) -> bytes:
    """
    Generate the run workbook.

    Args:
        report: Run report as produced by the CLI (kind, status, result, sizes, verification)
        sweep: Optional delta sweep table
        chromatogram: Optional chromatogram table

    Returns:
        bytes: Excel file as bytes
    """
    output = io.BytesIO()
    wb = Workbook()

    # =========================================================================
    # Sheet 1: Summary
    # =========================================================================
    ws1 = wb.active
    ws1.title = "Summary"
    ws1["A1"] = f"Robust {report.get('kind', 'model')} run"
    ws1["A1"].font = Font(bold=True, size=16)
    ws1["A2"] = f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M')}"
    ws1["A2"].font = Font(italic=True, color="666666")

    result = report.get("result") or {}
    metrics = [("Status", report.get("status"))]
    for key in ("x_minus", "x_plus", "objective", "bound", "purity_slack", "purity_certificate"):
        if result.get(key) is not None:
            metrics.append((key, result[key]))
    solver = report.get("solver") or {}
    for key in ("nodes", "iterations", "gap", "wall_time"):
        if solver.get(key) is not None:
            metrics.append((key, solver[key]))

    _header(ws1, 4, ["Metric", "Value"])
    for row_idx, (metric, value) in enumerate(metrics, start=5):
        ws1.cell(row=row_idx, column=1, value=metric)
        cell = ws1.cell(row=row_idx, column=2, value=value)
        if metric in ("x_minus", "x_plus", "objective", "bound"):
            cell.number_format = TIME_FORMAT
    ws1.column_dimensions["A"].width = 25
    ws1.column_dimensions["B"].width = 20

    # =========================================================================
    # Sheet 2: Model sizes
    # =========================================================================
    ws2 = wb.create_sheet("Model Size")
    sizes = report.get("model_sizes") or {}
    families = report.get("family_counts") or {}
    _header(ws2, 1, ["Item", "Count"])
    row_idx = 2
    for key, value in list(sizes.items()) + [(f"rows: {k}", v) for k, v in sorted(families.items())]:
        ws2.cell(row=row_idx, column=1, value=key)
        ws2.cell(row=row_idx, column=2, value=value)
        row_idx += 1
    ws2.column_dimensions["A"].width = 25

    # =========================================================================
    # Sheet 3: Verification
    # =========================================================================
    ws3 = wb.create_sheet("Verification")
    _header(ws3, 1, ["Certificate", "Feasible", "Worst value", "Witness", "Dual objective", "Sandwich gap"])
    verification = report.get("verification") or {}
    for row_idx, (name, entry) in enumerate(sorted(verification.items()), start=2):
        sip = entry.get("check_sip") or {}
        sandwich = entry.get("sandwich") or {}
        values = [
            name,
            "Yes" if sip.get("feasible") else "No",
            sip.get("worst_value"),
            sip.get("witness"),
            sandwich.get("dual_value"),
            sandwich.get("gap"),
        ]
        for col_idx, value in enumerate(values, start=1):
            ws3.cell(row=row_idx, column=col_idx, value=value)
        if not sip.get("feasible", True):
            for col_idx in range(1, len(values) + 1):
                ws3.cell(row=row_idx, column=col_idx).fill = FAIL_FILL
    ws3.column_dimensions["A"].width = 20

    if sweep is not None and len(sweep):
        _frame_sheet(wb, "Sweep", sweep)
    if chromatogram is not None and len(chromatogram):
        _frame_sheet(wb, "Chromatogram", chromatogram)

    wb.save(output)
    return output.getvalue()


def write_workbook(path: Union[str, Path], *args, **kwargs) -> Path:
    """export_to_excel written to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(export_to_excel(*args, **kwargs))
    logger.info(f"Wrote workbook {path}")
    return path


__all__ = ["export_to_excel", "write_workbook"]
