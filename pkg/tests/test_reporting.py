'''
Unit tests for report emission, diagnostics and run-configuration files.
'''

import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from src.models.config import CdtConfig, StudentConfig, TreeParams
from src.models.data import Dataset
from src.models.errors import DataValidationError
from src.pipeline.cdt import estimate_report
from src.reporting.diagnostics import arm_counts_frame, arm_warnings, diagnose_text, node_quantiles_frame
from src.reporting.schema import RunConfigFile, load_run_config
from src.reporting.serialize import (
    canonical_dumps,
    export_workbook,
    leaf_notes,
    load_report,
    render_report_tree,
    report_to_document,
    write_csv,
    write_report,
    write_selection,
)
from src.simulation.baseline import transformed_outcome_tree
from src.simulation.dgp import DgpConfig, DgpKind, gen_dataset
from src.stability.selection import BootstrapRecord, SelectionResult
from src.trees.cart import fit_tree


def _undefined_report():
    '''Report whose right-hand subgroup has no estimation controls.'''
    x = np.linspace(0, 1, 40).reshape(-1, 1)
    train = Dataset.from_arrays(x, np.tile([1, 0], 20), np.zeros(40))
    targets = np.where(x[:, 0] > 0.5, 1.0, 0.0)
    tree = fit_tree(x, targets, TreeParams(max_depth=1), feature_names=train.feature_names)
    est = Dataset.from_arrays(np.array([[0.1], [0.2], [0.3], [0.4], [0.6], [0.7], [0.8]]),
                              [1, 0, 1, 0, 1, 1, 1],
                              [1.0, 0.0, 1.5, 0.5, 2.0, 2.0, 2.0])
    return estimate_report(tree, train, est, targets, CdtConfig())


def _baseline_report():
    data, _, _ = gen_dataset(DgpConfig(dgp=DgpKind.ADDITIVE, n=600, p=3, seed=1))
    return transformed_outcome_tree(data, 0.5, CdtConfig(student=StudentConfig(prune='depth', depth=2)))


class TestCanonicalJson(unittest.TestCase):
    '''
    Tests cover:
    - Sorted keys, indentation and 17-digit floats.
    - Negative zero and non-finite floats.
    - Unsupported types.
    '''

    def test_layout(self):
        '''Test the exact text for a small document.'''
        text = canonical_dumps({'b': 1, 'a': [0.1, -0.0, float('nan')], 'c': {}, 'd': [True, None]})

        self.assertEqual(text, '{\n'
                               '  "a": [\n'
                               '    0.10000000000000001,\n'
                               '    0,\n'
                               '    null\n'
                               '  ],\n'
                               '  "b": 1,\n'
                               '  "c": {},\n'
                               '  "d": [\n'
                               '    true,\n'
                               '    null\n'
                               '  ]\n'
                               '}\n')

    def test_numpy_scalars(self):
        '''Test that numpy scalars encode like Python numbers.'''
        self.assertEqual(canonical_dumps([np.int64(3), np.float64(0.5)]), '[\n  3,\n  0.5\n]\n')

    def test_unsupported(self):
        '''Test that a set cannot be serialized.'''
        with self.assertRaises(TypeError):
            canonical_dumps({'a': {1, 2}})


class TestReportFiles(unittest.TestCase):
    '''
    Tests cover:
    - Byte-identical reload and re-emission of a report.
    - Schema-version and key checks on load.
    - Leaf annotations and CSV / workbook output.
    '''

    @classmethod
    def setUpClass(cls):
        '''Set up one baseline report.'''
        cls.report = _baseline_report()

    def setUp(self):
        '''Set up a temporary output directory.'''
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        '''Test that loading and re-emitting a report reproduces the file.'''
        path = write_report(self.report, self.dir / 'report.json')
        document = load_report(path)

        self.assertEqual(canonical_dumps(document), path.read_text(encoding='utf-8'))
        self.assertEqual(document['partition']['n_groups'], self.report.n_groups)
        self.assertEqual(document['method'], 'tot-baseline')

    def test_schema_mismatch(self):
        '''Test that another schema version is rejected.'''
        document = report_to_document(self.report)
        document['schema_version'] = '0.9'
        path = self.dir / 'old.json'
        path.write_text(json.dumps(document), encoding='utf-8')

        with self.assertRaises(DataValidationError) as context:
            load_report(path)

        self.assertIn("'0.9'", str(context.exception))

    def test_missing_key_and_bad_json(self):
        '''Test that truncated documents and invalid JSON are rejected.'''
        document = report_to_document(self.report)
        del document['subgroups']
        path = self.dir / 'partial.json'
        path.write_text(json.dumps(document), encoding='utf-8')
        with self.assertRaises(DataValidationError):
            load_report(path)

        path.write_text('{not json', encoding='utf-8')
        with self.assertRaises(DataValidationError):
            load_report(path)

        with self.assertRaises(DataValidationError):
            load_report(self.dir / 'absent.json')

    def test_rendered_tree(self):
        '''Test that each leaf line carries its honest estimate and arm counts.'''
        text = render_report_tree(self.report)
        leaf_lines = [line for line in text.splitlines() if '[leaf' in line]

        self.assertEqual(len(leaf_lines), self.report.n_groups)
        for line, estimate in zip(leaf_lines, self.report.estimates):
            self.assertIn(f'{estimate.n_g1}/{estimate.n_g0}', line)
            self.assertIn('->  ATE', line)

    def test_undefined_notes(self):
        '''Test the note for a subgroup without controls.'''
        notes = leaf_notes(_undefined_report())

        self.assertEqual(notes[1], 'ATE undefined, 3/0')
        self.assertTrue(notes[0].startswith('ATE 1.000 ('))

    def test_csv_precision(self):
        '''Test that CSV floats keep 17 significant digits.'''
        path = write_csv(pd.DataFrame({'value': [0.1]}), self.dir / 'table.csv')

        self.assertEqual(path.read_text(encoding='utf-8').splitlines(), ['value', '0.10000000000000001'])

    def test_workbook(self):
        '''Test that long sheet names are truncated and empty tables skipped.'''
        long_name = 'subgroup stability by teacher and depth'
        path = export_workbook({long_name: pd.DataFrame({'a': [1]}), 'empty': pd.DataFrame()},
                               self.dir / 'tables.xlsx')

        self.assertEqual(list(pd.read_excel(path, sheet_name=None)), [long_name[:31]])
        self.assertIsNone(export_workbook({'empty': pd.DataFrame()}, self.dir / 'none.xlsx'))

    def test_write_selection(self):
        '''Test the three selection outputs.'''
        records = tuple(BootstrapRecord(teacher=t, depth=1, bootstrap=b, ssi=s, depth_mismatch=False,
                                        features=(frozenset({0}), frozenset({0})))
                        for t, b, s in [('t-forest', 0, 0.9), ('t-forest', 1, 0.8),
                                        ('noise', 0, 0.3), ('noise', 1, 0.5)])
        result = SelectionResult(teachers=('t-forest', 'noise'), depths=(1,), n_bootstraps=2,
                                 records=records, feature_names=('X1', 'X2'))

        paths = write_selection(result, self.dir / 'selection')

        self.assertEqual(len(pd.read_csv(paths['ssi'])), 4)
        self.assertEqual(len(pd.read_csv(paths['feature_frequency'])), 4)
        summary = json.loads(paths['summary'].read_text(encoding='utf-8'))
        self.assertEqual(summary['recommended'], 't-forest')
        self.assertEqual(summary['warnings'], [])


class TestDiagnostics(unittest.TestCase):
    '''
    Tests cover:
    - Arm-count and quantile tables.
    - Warnings for thin arms and the undefined-estimate line.
    '''

    @classmethod
    def setUpClass(cls):
        '''Set up the document of a report with an undefined subgroup.'''
        cls.document = json.loads(canonical_dumps(report_to_document(_undefined_report())))

    def test_arm_counts(self):
        '''Test training and estimation counts per subgroup.'''
        table = arm_counts_frame(self.document)

        self.assertEqual(table['n_train_treated'].tolist(), [10, 10])
        self.assertEqual(table['n_est_control'].tolist(), [2, 0])

    def test_quantiles(self):
        '''Test that each node's teacher predictions are constant on a step target.'''
        table = node_quantiles_frame(self.document)

        self.assertEqual(list(table.columns), ['subgroup', 'n', 'min', 'q25', 'median', 'q75', 'max'])
        self.assertEqual(table['median'].tolist(), [0.0, 1.0])
        self.assertEqual(table['n'].sum(), 40)

    def test_warnings(self):
        '''Test that the thin right-hand subgroup is reported.'''
        warnings = arm_warnings(self.document)

        self.assertEqual(len(warnings), 1)
        self.assertIn('estimation control=0', warnings[0])

    def test_text(self):
        '''Test the diagnostics block headings and summary lines.'''
        text = diagnose_text(self.document)

        self.assertIn('student RMSE vs teacher predictions (training split): 0', text)
        self.assertIn('WARNING: subgroup "X1>0.5"', text)
        self.assertIn('undefined estimates: X1>0.5', text)


class TestRunConfigFile(unittest.TestCase):
    '''
    Tests cover:
    - Loading a partial config with defaults for the rest.
    - Numbered error lines for unknown fields and bad values.
    - Unsupported schema versions.
    '''

    def setUp(self):
        '''Set up a temporary directory for config files.'''
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, document) -> Path:
        path = self.dir / 'config.json'
        path.write_text(json.dumps(document), encoding='utf-8')
        return path

    def test_partial(self):
        '''Test that omitted sections take their defaults.'''
        config = load_run_config(self._write({'schema_version': '1.0', 'cdt': {'pi_train': 0.6}}))

        self.assertEqual(config.cdt.pi_train, 0.6)
        self.assertEqual(config.selection, RunConfigFile().selection)

    def test_errors_listed(self):
        '''Test that every invalid setting gets its own numbered line.'''
        path = self._write({'schema_version': '1.0', 'cdt': {'pi_trian': 0.6, 'seed': -1}})

        with self.assertRaises(DataValidationError) as context:
            load_run_config(path)

        message = str(context.exception)
        self.assertIn('2 invalid setting(s)', message)
        self.assertIn('cdt.pi_trian', message)
        self.assertIn('2) ', message)

    def test_version(self):
        '''Test that a missing or unknown schema version is rejected.'''
        with self.assertRaises(DataValidationError):
            load_run_config(self._write({'cdt': {}}))

        with self.assertRaises(DataValidationError) as context:
            load_run_config(self._write({'schema_version': '2.0'}))
        self.assertIn('not supported', str(context.exception))


if __name__ == '__main__':
    unittest.main()
