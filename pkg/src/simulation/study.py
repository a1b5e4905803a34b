'''
Replicate runner for simulation studies over a grid of data-generating
processes, sample sizes and signal strengths, plus mean / standard-error
aggregation of the long-format results table and per-feature selection
frequencies.
'''

import itertools
import logging
from enum import Enum

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import Field, model_validator

from ..models.config import CdtConfig, StrictModel, TeacherKind
from ..models.errors import CdtError
from ..models.seeds import child_seed
from ..pipeline.cdt import run_cdt
from .baseline import transformed_outcome_tree
from .dgp import DgpConfig, DgpKind, GroundTruth, OutcomeModel, gen_dataset
from .metrics import SubgroupMetrics, evaluate_report, evaluate_selected
from .regression import interacted_lasso, interacted_ols

logger = logging.getLogger(__name__)


class Method(str, Enum):

    '''Subgroup estimation methods compared in a study'''

    CDT_TFOREST = 'cdt-tforest'
    CDT_SGBT = 'cdt-sgbt'
    CDT_RGBT = 'cdt-rgbt'
    TOT_BASELINE = 'tot-baseline'
    INTERACTED_OLS = 'interacted-ols'
    INTERACTED_LASSO = 'interacted-lasso'


METHOD_TEACHERS = {
    Method.CDT_TFOREST: TeacherKind.T_LEARNER_FOREST,
    Method.CDT_SGBT: TeacherKind.S_LEARNER_GBT,
    Method.CDT_RGBT: TeacherKind.R_LEARNER_GBT,
}

GROUP_KEYS = ['dgp', 'outcome', 'n', 'pve', 'method']
METRIC_COLUMNS = ['tp', 'fp', 'f1', 'threshold_rmse_x1', 'threshold_rmse_x2',
                  'subgroup_ate_rmse', 'n_subgroups']
SELECTION_COLUMNS = ['selected_features', 'thresholds']
RESULT_COLUMNS = ['replicate'] + GROUP_KEYS + METRIC_COLUMNS + SELECTION_COLUMNS + ['error']


class StudyConfig(StrictModel):

    '''Grid of trials (dgp x outcome x n x pve), methods and replicate count'''

    dgps: tuple[DgpKind, ...] = Field(default=(DgpKind.AND, DgpKind.ADDITIVE, DgpKind.OR), min_length=1)
    outcomes: tuple[OutcomeModel, ...] = Field(default=(OutcomeModel.CATE_ONLY,), min_length=1)
    ns: tuple[int, ...] = Field(default=(500,), min_length=1)
    pves: tuple[float, ...] = Field(default=(1.0,), min_length=1)
    p: int = Field(default=10, ge=2)
    methods: tuple[Method, ...] = Field(default=(Method.CDT_TFOREST, Method.TOT_BASELINE), min_length=1)
    reps: int = Field(default=5, ge=1)
    seed: int = Field(default=0, ge=0)
    propensity_slope: float = 0.0
    cdt: CdtConfig = CdtConfig()
    mc_n: int = Field(default=1_000_000, ge=100)

    @model_validator(mode='after')
    def _check_cells(self) -> 'StudyConfig':
        self.cells()
        return self

    def cells(self) -> list[DgpConfig]:
        '''Grid cells in (dgp, outcome, n, pve) order; seeds are assigned per replicate.'''
        return [DgpConfig(dgp=dgp, outcome=outcome, n=n, p=self.p, pve=pve,
                          propensity_slope=self.propensity_slope)
                for dgp, outcome, n, pve in itertools.product(self.dgps, self.outcomes, self.ns, self.pves)]


def method_config(method: Method, base: CdtConfig, seed: int, confounded: bool = False) -> CdtConfig:
    '''Run configuration for one method: base settings with the method's teacher and the run seed.'''
    update = {'seed': seed}
    if method in METHOD_TEACHERS:
        teacher_update = {'kind': METHOD_TEACHERS[method]}
        if confounded:
            teacher_update.update(randomized=False, propensity=None)
        update['teacher'] = base.teacher.model_copy(update=teacher_update)
    return base.model_copy(update=update)


def run_method(method: Method, data, truth: GroundTruth, study: StudyConfig, seed: int) -> SubgroupMetrics:
    '''Fit one method on one simulated dataset and score it.'''
    if method is Method.INTERACTED_OLS:
        return evaluate_selected(interacted_ols(data).selected, truth)
    if method is Method.INTERACTED_LASSO:
        return evaluate_selected(interacted_lasso(data, seed=seed).selected, truth)

    config = method_config(method, study.cdt, seed, confounded=truth.propensity_slope != 0)
    if method is Method.TOT_BASELINE:
        report = transformed_outcome_tree(data, truth.propensity(data.x), config)
    else:
        report = run_cdt(data, config)
    return evaluate_report(report, truth, mc_n=study.mc_n, seed=child_seed(seed, 'truth'))


def _thresholds_text(thresholds: dict, names) -> str:
    return ';'.join(f'{names[j]}:' + '|'.join('%.17g' % t for t in values)
                    for j, values in sorted(thresholds.items()))


def _metrics_row(metrics: SubgroupMetrics, names) -> dict:
    return {'tp': metrics.tp,
            'fp': metrics.fp,
            'f1': metrics.f1,
            'threshold_rmse_x1': metrics.threshold_rmse.get(0),
            'threshold_rmse_x2': metrics.threshold_rmse.get(1),
            'subgroup_ate_rmse': metrics.subgroup_ate_rmse,
            'n_subgroups': metrics.n_subgroups,
            'selected_features': ';'.join(names[j] for j in sorted(metrics.selected)),
            'thresholds': _thresholds_text(metrics.thresholds, names),
            'error': None}


def replicate_seeds(seed: int, replicate: int, cell_index: int) -> tuple[int, int]:
    '''(data seed, method seed) for one replicate of one grid cell.'''
    return (child_seed(seed, 'replicate', replicate, cell_index),
            child_seed(seed, 'method', replicate, cell_index))


def _run_replicate(study: StudyConfig, replicate: int, cell_index: int, cell: DgpConfig) -> list[dict]:
    data_seed, method_seed = replicate_seeds(study.seed, replicate, cell_index)
    data, truth, _ = gen_dataset(cell.model_copy(update={'seed': data_seed}))
    keys = {'replicate': replicate, 'dgp': cell.dgp.value, 'outcome': cell.outcome.value,
            'n': cell.n, 'pve': cell.pve}

    rows = []
    for method in study.methods:
        try:
            row = _metrics_row(run_method(method, data, truth, study, method_seed), data.feature_names)
        except (CdtError, ValueError, np.linalg.LinAlgError) as exc:
            logger.warning('replicate %d, %s, %s failed: %s', replicate, cell.dgp.value, method.value, exc)
            row = {column: None for column in METRIC_COLUMNS + SELECTION_COLUMNS}
            row['error'] = f'{type(exc).__name__}: {exc}'
        rows.append({**keys, 'method': method.value, **row})
    return rows


def run_replicates(study: StudyConfig, n_jobs: int = 1) -> pd.DataFrame:
    '''
    Run every method on every replicate of every grid cell.

    A failing method writes a row with its error message instead of metrics
    and the study carries on. Row order is (replicate, cell, method)
    whatever the worker count.

    Returns:
        DataFrame with RESULT_COLUMNS.
    '''

    cells = study.cells()
    tasks = [(r, k, cell) for r in range(study.reps) for k, cell in enumerate(cells)]
    logger.info('simulation study: %d replicate(s) x %d cell(s) x %d method(s)',
                study.reps, len(cells), len(study.methods))
    batches = Parallel(n_jobs=n_jobs)(delayed(_run_replicate)(study, r, k, cell) for r, k, cell in tasks)

    results = pd.DataFrame([row for batch in batches for row in batch], columns=RESULT_COLUMNS)
    results[METRIC_COLUMNS] = results[METRIC_COLUMNS].astype(float)
    return results


def aggregate(results: pd.DataFrame) -> pd.DataFrame:
    '''
    Mean and standard error (sd / sqrt(count)) of every metric per
    (dgp, outcome, n, pve, method). count is the number of replicates that
    ran without error; undefined metrics are skipped in their own mean.
    '''

    frame = results.assign(_ok=results['error'].isna())
    grouped = frame.groupby(GROUP_KEYS, sort=False)
    summary = grouped['_ok'].sum().astype(int).rename('count').to_frame()
    for metric in METRIC_COLUMNS:
        values = grouped[metric]
        summary[f'{metric}_mean'] = values.mean()
        summary[f'{metric}_se'] = values.std(ddof=1) / np.sqrt(values.count())
    return summary.reset_index()


def selection_frequency(results: pd.DataFrame) -> pd.DataFrame:
    '''
    Share of error-free replicates in which each feature was selected, per
    (dgp, outcome, n, pve, method). Features never selected are left out.
    '''

    ok = results[results['error'].isna()]
    counts = ok.groupby(GROUP_KEYS, sort=False).size().rename('count')
    picked = (ok.assign(feature=ok['selected_features'].fillna('').str.split(';'))
                .explode('feature'))
    picked = picked[picked['feature'] != '']
    if picked.empty:
        return pd.DataFrame(columns=GROUP_KEYS + ['feature', 'count', 'frequency'])
    table = picked.groupby(GROUP_KEYS + ['feature'], sort=False).size().rename('selected').reset_index()
    table = table.merge(counts.reset_index(), on=GROUP_KEYS)
    table['frequency'] = table['selected'] / table['count']
    return table[GROUP_KEYS + ['feature', 'count', 'frequency']]
