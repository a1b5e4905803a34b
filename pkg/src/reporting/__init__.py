'''
Report emission (canonical JSON, plot-ready CSV, Excel workbooks),
diagnostics rendering and run-configuration files.
'''

from .diagnostics import arm_counts_frame, arm_warnings, diagnose_text, node_quantiles_frame
from .schema import RunConfigFile, format_validation_error, load_run_config
from .serialize import (
    SCHEMA_VERSION,
    canonical_dumps,
    export_workbook,
    load_report,
    render_report_tree,
    report_to_document,
    selection_document,
    write_csv,
    write_report,
    write_selection,
    write_study,
)
