'''
Causal Distillation Trees command-line application.

This module is the entry point for the four workflows:

1. fit             distil a teacher into a student tree and estimate subgroup
                   effects honestly, writing a JSON report and a text tree
2. select-teacher  compare candidate teachers by bootstrap subgroup stability
3. simulate        run a simulation study and write long and summary CSVs
4. diagnose        print diagnostics for a saved report

Exit codes: 0 success, 2 data or configuration errors, 3 estimation failures.
Defaults for --threads and --log-level come from CDT_THREADS / CDT_LOG_LEVEL.
'''

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from .models.config import CdtConfig, PruneMode, SelectionConfig, TeacherKind, settings
from .models.errors import CdtError, DataValidationError
from .pipeline.cdt import honest_split, run_cdt
from .pipeline.data_pipeline import DataPipeline
from .reporting.diagnostics import arm_counts_frame, diagnose_text
from .reporting.schema import RunConfigFile, format_validation_error, load_run_config
from .reporting.serialize import (
    export_workbook,
    load_report,
    render_report_tree,
    write_csv,
    write_report,
    write_selection,
    write_study,
)
from .simulation.study import StudyConfig, aggregate, run_replicates, selection_frequency
from .stability.selection import feature_stability, select_teacher, stability_warnings

logger = logging.getLogger(__name__)

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')
ESTIMATION_EXIT_CODE = 3


# ===============================
# Flag parsing helpers
# ===============================

def _csv_list(value: str) -> list[str]:
    items = [v.strip() for v in value.split(',') if v.strip()]
    if not items:
        raise argparse.ArgumentTypeError('expected a comma-separated list')
    return items


def _int_list(value: str) -> list[int]:
    try:
        return [int(v) for v in _csv_list(value)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f'expected comma-separated integers, got {value!r}') from exc


def _float_list(value: str) -> list[float]:
    try:
        return [float(v) for v in _csv_list(value)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f'expected comma-separated numbers, got {value!r}') from exc


def _prune(value: str) -> tuple[PruneMode, Optional[int]]:
    '''cv | none | depth=K'''
    if value in (PruneMode.CV.value, PruneMode.NONE.value):
        return PruneMode(value), None
    name, _, depth = value.partition('=')
    if name == PruneMode.DEPTH.value and depth.isdigit():
        return PruneMode.DEPTH, int(depth)
    raise argparse.ArgumentTypeError(f"expected cv, none or depth=K, got {value!r}")


def _propensity(value: str) -> tuple[str, Optional[float]]:
    '''estimate -> ('estimate', None); known=E -> ('known', E)'''
    if value == 'estimate':
        return value, None
    name, _, number = value.partition('=')
    try:
        if name == 'known':
            return name, float(number)
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected known=E or estimate, got {value!r}")


def _teacher_kind(name: str) -> TeacherKind:
    try:
        return TeacherKind(name)
    except ValueError as exc:
        choices = ', '.join(k.value for k in TeacherKind)
        raise DataValidationError(f'unknown teacher {name!r}; choose from {choices}') from exc


# ===============================
# Config assembly
# ===============================

def _run_config(args) -> RunConfigFile:
    return load_run_config(args.config) if args.config else RunConfigFile()


def _teacher_overrides(args) -> dict:
    overrides = {}
    if getattr(args, 'crossfit_repeats', None) is not None:
        overrides['crossfit_repeats'] = args.crossfit_repeats
    if getattr(args, 'propensity', None) is not None:
        known = args.propensity[1]
        overrides.update(randomized=known is not None, propensity=known)
    return overrides


def _cdt_config(base: CdtConfig, args) -> CdtConfig:
    '''Apply command-line flags over a base config, validating the result.'''

    raw = base.model_dump()
    teacher = raw['teacher']
    teacher.update(_teacher_overrides(args))
    if getattr(args, 'teacher', None):
        teacher['kind'] = _teacher_kind(args.teacher)
    if getattr(args, 'n_trees', None) is not None:
        teacher['forest']['n_trees'] = args.n_trees
    if getattr(args, 'prune', None) is not None:
        raw['student']['prune'], raw['student']['depth'] = args.prune
    if getattr(args, 'pi_train', None) is not None:
        raw['pi_train'] = args.pi_train
    if args.seed is not None:
        raw['seed'] = args.seed
    if getattr(args, 'dr', False):
        raw['dr'] = True
        if getattr(args, 'propensity', None) is not None:
            raw['dr_propensity'] = args.propensity[1]
    if getattr(args, 'literal_test', False):
        raw['literal_heterogeneity_test'] = True
    return CdtConfig.model_validate(raw)


def _study_config(base: StudyConfig, args) -> StudyConfig:
    raw = base.model_dump()
    for flag, field in (('dgp', 'dgps'), ('pve', 'pves'), ('n', 'ns'),
                        ('outcome', 'outcomes'), ('methods', 'methods')):
        value = getattr(args, flag)
        if value is not None:
            raw[field] = value
    for field in ('p', 'reps', 'seed'):
        value = getattr(args, field)
        if value is not None:
            raw[field] = value
    return StudyConfig.model_validate(raw)


def _load_dataset(args):
    pipeline = DataPipeline(args.data,
                            outcome=args.outcome,
                            treatment=args.treatment,
                            id_column=args.id_column,
                            covariates=args.covariates)
    dataset = pipeline.process()
    n1, n0 = dataset.arm_counts()
    print(f'✅ Loaded {dataset.n} units ({n1} treated, {n0} control) '
          f'with {dataset.p} covariates from {Path(args.data).name}')
    return dataset


# ===============================
# Commands
# ===============================

def cmd_fit(args) -> int:
    '''Fit a causal distillation tree and write its report.'''

    config = _cdt_config(_run_config(args).cdt, args)
    dataset = _load_dataset(args)
    report = run_cdt(dataset, config, n_jobs=args.threads)

    write_report(report, args.out)
    tree_text = render_report_tree(report)
    if args.tree_out:
        Path(args.tree_out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.tree_out).write_text(tree_text, encoding='utf-8')
    else:
        print(tree_text, end='')

    for message in report.warnings:
        print(f'⚠️ {message}')
    test = report.heterogeneity
    if test.performed:
        print(f'✅ {report.n_groups} subgroup(s); heterogeneity {test.method}: '
              f'statistic {test.statistic:.4g}, df {test.df}, p = {test.p_value:.4g}')
    else:
        print(f'⚠️ {report.n_groups} subgroup(s); heterogeneity test skipped ({test.skipped_reason})')
    print(f'✅ Report written to {args.out}')
    return 0


def cmd_select_teacher(args) -> int:
    '''Rank candidate teachers by the stability of their student trees.'''

    run_config = _run_config(args)
    cdt = _cdt_config(run_config.cdt, args)
    base = run_config.selection
    teachers = [cdt.teacher.model_copy(update={'kind': _teacher_kind(name)})
                for name in (args.teachers or [t.name for t in base.teachers])]
    selection = SelectionConfig.model_validate({
        'teachers': [t.model_dump() for t in teachers],
        'depths': args.depths if args.depths is not None else base.depths,
        'n_bootstraps': args.bootstraps if args.bootstraps is not None else base.n_bootstraps,
        'student': base.student.model_dump(),
        'seed': cdt.seed})

    dataset = _load_dataset(args)
    train_idx, _ = honest_split(dataset, cdt.pi_train, cdt.seed)
    result = select_teacher(dataset.subset(train_idx), selection.teachers, selection.depths,
                            n_bootstraps=selection.n_bootstraps, student_params=selection.student,
                            seed=selection.seed, n_jobs=args.threads)

    paths = write_selection(result, args.out_dir)
    if args.excel:
        export_workbook({'SSI': result.ssi_table(),
                         'Summary': result.summary(),
                         'Feature Frequency': feature_stability(result)}, args.excel)

    print(result.summary().to_string(index=False, float_format=lambda v: f'{v:.4f}'))
    for message in stability_warnings(result):
        print(f'⚠️ {message}')
    print(f'✅ Recommended teacher: {result.recommended}')
    print(f"✅ Bootstrap SSIs written to {paths['ssi']}")
    return 0


def cmd_simulate(args) -> int:
    '''Run a simulation study and write the results tables.'''

    study = _study_config(_run_config(args).study, args)
    results = run_replicates(study, n_jobs=args.threads)
    summary = aggregate(results)
    frequency = selection_frequency(results)

    paths = write_study(results, summary, args.out_dir, frequency)
    if args.excel:
        export_workbook({'Results': results, 'Summary': summary, 'Selection': frequency}, args.excel)

    failed = int(results['error'].notna().sum())
    if failed:
        print(f'⚠️ {failed} of {len(results)} method run(s) failed; see the error column')
    print(f"✅ {len(results)} result row(s) written to {paths['results']}")
    print(f"✅ Summary written to {paths['summary']}")
    return 0


def cmd_diagnose(args) -> int:
    '''Print diagnostics for a saved report.'''

    document = load_report(args.report)
    print(diagnose_text(document), end='')
    if args.csv:
        write_csv(arm_counts_frame(document), args.csv)
        print(f'✅ Arm counts written to {args.csv}')
    return 0


# ===============================
# Parser
# ===============================

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, default=None, help='base seed (default: config file or 0)')
    parser.add_argument('--threads', type=int, default=settings.threads,
                        help='worker processes (default: CDT_THREADS or 1)')
    parser.add_argument('--log-level', type=str.upper, choices=LOG_LEVELS, default=settings.log_level.upper())
    parser.add_argument('--config', type=Path, default=None, help='JSON run-configuration file')


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('data', type=Path, help='CSV file with a header row')
    parser.add_argument('--outcome', required=True, help='outcome column')
    parser.add_argument('--treatment', required=True, help='binary (0/1) treatment column')
    parser.add_argument('--id-column', default=None, help='unit identifier column')
    parser.add_argument('--covariates', type=_csv_list, default=None,
                        help='covariate columns (default: every other column)')
    parser.add_argument('--pi-train', type=float, default=None, help='training fraction (default 0.7)')
    parser.add_argument('--crossfit-repeats', type=int, default=None, help='cross-fit repeats for s-gbt / r-gbt')
    parser.add_argument('--n-trees', type=int, default=None, help='trees in the t-forest teacher')
    parser.add_argument('--propensity', type=_propensity, default=None,
                        help='known=E for a known propensity, or estimate')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='cdt', description='Causal distillation trees')
    commands = parser.add_subparsers(dest='command', required=True)

    fit = commands.add_parser('fit', help='fit a causal distillation tree')
    _add_data(fit)
    _add_common(fit)
    fit.add_argument('--teacher', choices=[k.value for k in TeacherKind if k is not TeacherKind.NOISE_TEACHER],
                     default=None)
    fit.add_argument('--prune', type=_prune, default=None, help='cv, none or depth=K')
    fit.add_argument('--dr', action='store_true', help='also report the weighted-adjusted estimator')
    fit.add_argument('--literal-test', action='store_true',
                     help='heterogeneity test against the overall effect with df = G')
    fit.add_argument('--out', type=Path, required=True, help='report JSON path')
    fit.add_argument('--tree-out', type=Path, default=None, help='text tree path (default: stdout)')
    fit.set_defaults(handler=cmd_fit)

    select = commands.add_parser('select-teacher', help='compare teachers by subgroup stability')
    _add_data(select)
    _add_common(select)
    select.add_argument('--teachers', type=_csv_list, default=None, help='e.g. t-forest,noise')
    select.add_argument('--depths', type=_int_list, default=None, help='default 1,2,3,4')
    select.add_argument('--bootstraps', type=int, default=None, help='bootstrap pairs (default 100)')
    select.add_argument('--out-dir', type=Path, required=True)
    select.add_argument('--excel', type=Path, default=None, help='also write an Excel workbook')
    select.set_defaults(handler=cmd_select_teacher)

    simulate = commands.add_parser('simulate', help='run a simulation study')
    _add_common(simulate)
    simulate.add_argument('--dgp', type=_csv_list, default=None, help='and,additive,or')
    simulate.add_argument('--pve', type=_float_list, default=None)
    simulate.add_argument('--n', type=_int_list, default=None)
    simulate.add_argument('--p', type=int, default=None)
    simulate.add_argument('--outcome', type=_csv_list, default=None, help='cate-only,linear-covariates')
    simulate.add_argument('--methods', type=_csv_list, default=None,
                          help='cdt-tforest,cdt-sgbt,cdt-rgbt,tot-baseline,interacted-ols,interacted-lasso')
    simulate.add_argument('--reps', type=int, default=None)
    simulate.add_argument('--out-dir', type=Path, required=True)
    simulate.add_argument('--excel', type=Path, default=None, help='also write an Excel workbook')
    simulate.set_defaults(handler=cmd_simulate)

    diagnose = commands.add_parser('diagnose', help='print diagnostics for a report')
    diagnose.add_argument('report', type=Path)
    diagnose.add_argument('--csv', type=Path, default=None, help='write arm counts per subgroup')
    diagnose.add_argument('--log-level', type=str.upper, choices=LOG_LEVELS,
                          default=settings.log_level.upper())
    diagnose.set_defaults(handler=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format='%(levelname)s %(name)s: %(message)s')

    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f'❌ {exc.error_count()} invalid setting(s):\n{format_validation_error(exc)}', file=sys.stderr)
        return DataValidationError.exit_code
    except CdtError as exc:
        print(f'❌ {exc}', file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, ValueError) as exc:
        print(f'❌ estimation failed: {exc}', file=sys.stderr)
        return ESTIMATION_EXIT_CODE


if __name__ == '__main__':
    sys.exit(main())
