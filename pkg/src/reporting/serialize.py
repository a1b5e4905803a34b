'''
Report, table and workbook emission.

Report JSON is canonical: keys sorted, two-space indentation, floats with
17 significant digits and non-finite floats as null, so loading a report
and emitting it again reproduces the file byte for byte.
'''

import json
import logging
import math
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import pandas as pd

from ..models.errors import DataValidationError
from ..pipeline.cdt import CdtReport
from ..stability.selection import SelectionResult, feature_stability, stability_warnings
from ..trees.render import tree_to_dict, tree_to_text

logger = logging.getLogger(__name__)

SCHEMA_VERSION = '1.0'
CSV_FLOAT_FORMAT = '%.17g'
REPORT_KEYS = ('schema_version', 'method', 'config', 'seed', 'partition', 'subgroups',
               'overall_tau', 'heterogeneity_test', 'diagnostics', 'warnings')


def _format_float(value: float) -> str:
    if not math.isfinite(value):
        return 'null'
    if value == 0:
        value = 0.0     # -0.0 would reload as int 0
    return '%.17g' % value


def _encode(value, level: int) -> str:
    if isinstance(value, np.generic):
        value = value.item()
    if value is None:
        return 'null'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)

    pad, close = '  ' * (level + 1), '  ' * level
    if isinstance(value, Mapping):
        if not value:
            return '{}'
        items = [f'{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(value[k], level + 1)}'
                 for k in sorted(value, key=str)]
        return '{\n' + ',\n'.join(items) + '\n' + close + '}'
    if isinstance(value, (list, tuple, np.ndarray)):
        if len(value) == 0:
            return '[]'
        items = [f'{pad}{_encode(v, level + 1)}' for v in value]
        return '[\n' + ',\n'.join(items) + '\n' + close + ']'
    raise TypeError(f'cannot serialize {type(value).__name__}')


def canonical_dumps(document) -> str:
    '''Canonical JSON text of a document, with a trailing newline.'''
    return _encode(document, 0) + '\n'


def _subgroup_row(estimate) -> dict:
    return {'label': estimate.subgroup.label,
            'rules': [rule.model_dump(mode='json') for rule in estimate.subgroup.rules],
            'n_g': estimate.n_g,
            'n_g1': estimate.n_g1,
            'n_g0': estimate.n_g0,
            'tau_hat': estimate.tau_hat,
            'var_hat': estimate.var_hat,
            'se': estimate.se,
            'ci_low': estimate.ci_low,
            'ci_high': estimate.ci_high,
            'p_value': estimate.p_value,
            'undefined': estimate.undefined,
            'undefined_reason': estimate.undefined_reason,
            'student_mean': estimate.student_mean,
            'dr_tau_hat': estimate.dr_tau_hat,
            'dr_se': None if estimate.dr_var_hat is None else math.sqrt(estimate.dr_var_hat)}


def report_to_document(report: CdtReport) -> dict:
    '''JSON-ready dict of a report.'''
    names = report.student_tree.feature_names
    return {'schema_version': SCHEMA_VERSION,
            'method': report.method,
            'config': report.config.model_dump(mode='json'),
            'seed': report.seed,
            'partition': {'source': report.partition.source,
                          'n_groups': report.partition.n_groups,
                          'tree': tree_to_dict(report.student_tree, names)},
            'subgroups': [_subgroup_row(e) for e in report.estimates],
            'overall_tau': report.overall_tau,
            'heterogeneity_test': report.heterogeneity.model_dump(mode='json'),
            'diagnostics': report.diagnostics.model_dump(mode='json'),
            'warnings': list(report.warnings)}


def load_report(path) -> dict:
    '''
    Read a report document, checking its schema version and top-level keys.

    Raises:
        DataValidationError for unreadable JSON, a schema-version mismatch
        or missing keys.
    '''

    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError as exc:
        raise DataValidationError(f'report not found at {path}') from exc
    except json.JSONDecodeError as exc:
        raise DataValidationError(f'{path} is not valid JSON: {exc}') from exc

    if not isinstance(document, dict):
        raise DataValidationError(f'{path} does not hold a report object')
    version = document.get('schema_version')
    if version != SCHEMA_VERSION:
        raise DataValidationError(f'report schema version {version!r} is not supported '
                                  f'(expected {SCHEMA_VERSION!r})')
    missing = [k for k in REPORT_KEYS if k not in document]
    if missing:
        raise DataValidationError(f'report is missing keys: {missing}')
    return document


def write_report(report: CdtReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_dumps(report_to_document(report)), encoding='utf-8')
    return path


def leaf_notes(report: CdtReport) -> dict[int, str]:
    '''Per-leaf "ATE (SE), n_g1/n_g0" text, keyed by leaf ordinal.'''
    notes = {}
    for k, estimate in enumerate(report.estimates):
        counts = f'{estimate.n_g1}/{estimate.n_g0}'
        if estimate.tau_hat is None:
            notes[k] = f'ATE undefined, {counts}'
        elif estimate.se is None:
            notes[k] = f'ATE {estimate.tau_hat:.3f} (SE undefined), {counts}'
        else:
            notes[k] = f'ATE {estimate.tau_hat:.3f} ({estimate.se:.3f}), {counts}'
    return notes


def render_report_tree(report: CdtReport) -> str:
    return tree_to_text(report.student_tree, report.student_tree.feature_names, leaf_notes(report))


def write_csv(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


def selection_document(result: SelectionResult) -> dict:
    summary = result.summary()
    return {'schema_version': SCHEMA_VERSION,
            'teachers': list(result.teachers),
            'depths': list(result.depths),
            'n_bootstraps': result.n_bootstraps,
            'recommended': result.recommended,
            'summary': summary.to_dict(orient='records'),
            'warnings': stability_warnings(result)}


def write_selection(result: SelectionResult, out_dir) -> dict[str, Path]:
    '''ssi.csv, feature_frequency.csv and selection.json under out_dir.'''
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / 'selection.json'
    summary_path.write_text(canonical_dumps(selection_document(result)), encoding='utf-8')
    return {'ssi': write_csv(result.ssi_table(), out_dir / 'ssi.csv'),
            'feature_frequency': write_csv(feature_stability(result), out_dir / 'feature_frequency.csv'),
            'summary': summary_path}


def write_study(results: pd.DataFrame,
                summary: pd.DataFrame,
                out_dir,
                frequency: Optional[pd.DataFrame] = None) -> dict[str, Path]:
    '''results.csv, summary.csv and, when given, selection_frequency.csv under out_dir.'''
    out_dir = Path(out_dir)
    paths = {'results': write_csv(results, out_dir / 'results.csv'),
             'summary': write_csv(summary, out_dir / 'summary.csv')}
    if frequency is not None:
        paths['selection_frequency'] = write_csv(frequency, out_dir / 'selection_frequency.csv')
    return paths


def export_workbook(sheets: Mapping[str, pd.DataFrame], output_file) -> Optional[Path]:
    '''
    Write each non-empty table to its own sheet of an Excel workbook.

    Returns the written path, or None when every table is empty.
    '''

    data_to_export = [(name, df) for name, df in sheets.items() if df is not None and not df.empty]
    if not data_to_export:
        logger.info('no tables to export')
        return None

    output_file = Path(output_file)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    with pd.ExcelWriter(output_file, engine='openpyxl') as writer:
        for sheet_name, df in data_to_export:
            df.to_excel(writer, sheet_name=sheet_name[:31], index=False)
    logger.info('exported %s to %s', ', '.join(name for name, _ in data_to_export), output_file)
    return output_file
