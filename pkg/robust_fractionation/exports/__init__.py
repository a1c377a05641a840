"""Writers for reports, certificates, chromatograms, sweep tables and workbooks."""
from .json_export import (
    block_from_dict,
    block_to_dict,
    certificate_from_dict,
    certificate_to_dict,
    read_certificates,
    write_certificates,
    write_report,
)
from .csv_export import SWEEP_COLUMNS, emit_chromatogram_csv, write_sweep_csv
from .excel_export import export_to_excel, write_workbook

__all__ = [
    "block_from_dict",
    "block_to_dict",
    "certificate_from_dict",
    "certificate_to_dict",
    "read_certificates",
    "write_certificates",
    "write_report",
    "SWEEP_COLUMNS",
    "emit_chromatogram_csv",
    "write_sweep_csv",
    "export_to_excel",
    "write_workbook",
]
