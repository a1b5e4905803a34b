'''
End-to-end causal distillation run.

The data are split once into a training part, used to fit the teacher and
grow the student tree, and an estimation part, used only to estimate the
effect inside each subgroup the student found. No outcome from the
estimation part can reach the partition.
'''

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import stats

from ..models.config import CdtConfig, PruneMode, StudentConfig
from ..models.data import Dataset, Partition, Subgroup, assign, partition_from_tree
from ..models.errors import DataValidationError, EstimationError, UndefinedEstimateError
from ..models.seeds import child_seed, rng_for
from ..teachers.metalearners import fit_teacher
from ..trees.cart import RegressionTree, fit_tree, predict
from ..trees.pruning import cv_prune, prune_to_depth
from .inference import (
    HeterogeneityTest,
    dr_weighted_adjusted,
    fit_propensity,
    heterogeneity_test,
    subgroup_dim,
    subgroup_variance,
)

logger = logging.getLogger(__name__)

CI_LEVEL = 0.95


class SubgroupEstimate(BaseModel):

    '''
    Honest effect estimate for one subgroup.

    undefined is set when either estimation-side arm has fewer than two
    units; tau_hat is still filled when both arms have at least one.
    '''

    model_config = ConfigDict(frozen=True)

    subgroup: Subgroup
    tau_hat: Optional[float] = None
    var_hat: Optional[float] = None
    n_g: int
    n_g1: int
    n_g0: int
    student_mean: float
    undefined: bool = False
    undefined_reason: Optional[str] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    p_value: Optional[float] = None
    dr_tau_hat: Optional[float] = None
    dr_var_hat: Optional[float] = None

    @model_validator(mode='after')
    def _check_counts(self) -> 'SubgroupEstimate':
        if self.n_g != self.n_g1 + self.n_g0:
            raise ValueError(f'n_g ({self.n_g}) must equal n_g1 + n_g0 ({self.n_g1} + {self.n_g0})')
        return self

    @property
    def se(self) -> Optional[float]:
        return None if self.var_hat is None else math.sqrt(self.var_hat)


class NodeSummary(BaseModel):

    '''Training-side view of one subgroup'''

    model_config = ConfigDict(frozen=True)

    label: str
    n_train: int
    n_train_treated: int
    n_train_control: int
    target_min: float
    target_q25: float
    target_median: float
    target_q75: float
    target_max: float


class Diagnostics(BaseModel):

    '''Student fit quality and arm balance, computed on the training split'''

    model_config = ConfigDict(frozen=True)

    teacher: str
    student_rmse: float
    student_depth: int
    student_leaves: int
    n_train: int
    n_est: int
    train_arm_counts: tuple[int, int]
    est_arm_counts: tuple[int, int]
    in_sample_flagged: int = 0
    nodes: tuple[NodeSummary, ...]


@dataclass(frozen=True)
class CdtReport:

    '''Everything one run produces; student_tree is kept for rendering only'''

    method: str
    config: CdtConfig
    seed: int
    partition: Partition
    estimates: tuple[SubgroupEstimate, ...]
    overall_tau: Optional[float]
    heterogeneity: HeterogeneityTest
    diagnostics: Diagnostics
    warnings: tuple[str, ...]
    student_tree: RegressionTree

    @property
    def n_groups(self) -> int:
        return self.partition.n_groups


def honest_split(data: Dataset, pi_train: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    '''
    Arm-stratified split into floor(pi_train * n) training units and the rest.

    Each arm contributes to the training part in proportion to its size,
    clamped so both arms keep at least one unit on each side.

    Returns:
        (train_idx, est_idx), each sorted.
    '''

    n = data.n
    n_train = int(math.floor(pi_train * n))
    if n_train < 2 or n - n_train < 2:
        raise DataValidationError(f'pi_train={pi_train} leaves {n_train} training and '
                                  f'{n - n_train} estimation units; both need at least 2')
    n1, n0 = data.arm_counts()
    if n1 < 2 or n0 < 2:
        raise EstimationError(f'both splits need both arms but the data have {n1} treated '
                              f'and {n0} control units')

    k1 = min(max(int(round(n_train * n1 / n)), 1), n1 - 1)
    k0 = n_train - k1
    if not 1 <= k0 <= n0 - 1:
        k0 = min(max(k0, 1), n0 - 1)
        k1 = n_train - k0
    if not (1 <= k1 <= n1 - 1 and 1 <= k0 <= n0 - 1):
        raise EstimationError(f'no arm-stratified split of {n1}/{n0} units puts both arms '
                              f'on both sides with {n_train} training units')

    rng = rng_for(seed, 'split')
    treated = rng.permutation(np.flatnonzero(data.z == 1))
    control = rng.permutation(np.flatnonzero(data.z == 0))
    train_idx = np.sort(np.concatenate([treated[:k1], control[:k0]]))
    est_idx = np.sort(np.concatenate([treated[k1:], control[k0:]]))
    return train_idx, est_idx


def fit_student(x, targets, student: StudentConfig, seed: int,
                feature_names=None) -> tuple[RegressionTree, list[str]]:
    '''Grow the student tree on (x, targets) and prune it as configured.'''

    notes: list[str] = []
    if student.prune is PruneMode.CV:
        tree = cv_prune(x, targets, student.tree, folds=student.cv_folds,
                        seed=child_seed(seed, 'cv'), cp=student.cp, rule=student.cv_rule,
                        feature_names=feature_names)
    else:
        tree = fit_tree(x, targets, student.tree, seed=child_seed(seed, 'student'),
                        feature_names=feature_names)
        if student.prune is PruneMode.DEPTH:
            tree = prune_to_depth(tree, student.depth)
            if tree.depth < student.depth:
                notes.append(f'student tree reached depth {tree.depth}, '
                             f'short of the requested depth {student.depth}')
    logger.info('student tree: depth %d, %d leaves', tree.depth, tree.n_leaves)
    return tree, notes


def _node_summary(subgroup: Subgroup, train: Dataset, targets: np.ndarray, rows: np.ndarray) -> NodeSummary:
    values = targets[rows]
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    treated = int(train.z[rows].sum())
    return NodeSummary(label=subgroup.label,
                       n_train=int(rows.sum()),
                       n_train_treated=treated,
                       n_train_control=int(rows.sum()) - treated,
                       target_min=float(q[0]),
                       target_q25=float(q[1]),
                       target_median=float(q[2]),
                       target_q75=float(q[3]),
                       target_max=float(q[4]))


def _estimate_subgroup(subgroup: Subgroup,
                       g: int,
                       est: Dataset,
                       membership: np.ndarray,
                       student_mean: float,
                       e_hat: Optional[np.ndarray],
                       dropped: list) -> SubgroupEstimate:
    in_group = membership == g
    n1 = int(est.z[in_group].sum())
    n0 = int(in_group.sum()) - n1
    fields = dict(subgroup=subgroup, n_g=n1 + n0, n_g1=n1, n_g0=n0, student_mean=student_mean)

    if n1 >= 1 and n0 >= 1:
        fields['tau_hat'] = subgroup_dim(est, membership, g)
    try:
        var_hat = subgroup_variance(est, membership, g)
    except UndefinedEstimateError as exc:
        fields.update(undefined=True, undefined_reason=str(exc))
    else:
        fields['var_hat'] = var_hat
        se = math.sqrt(var_hat)
        half_width = stats.norm.ppf(0.5 + CI_LEVEL / 2) * se
        fields.update(ci_low=fields['tau_hat'] - half_width, ci_high=fields['tau_hat'] + half_width)
        if se > 0:
            fields['p_value'] = float(2 * stats.norm.sf(abs(fields['tau_hat']) / se))

    if e_hat is not None:
        try:
            dr_tau, dr_var = dr_weighted_adjusted(est, membership, g, e_hat, dropped=dropped)
            fields.update(dr_tau_hat=dr_tau, dr_var_hat=dr_var)
        except UndefinedEstimateError as exc:
            logger.warning('weighted-adjusted estimate skipped for %s: %s', subgroup.label, exc)
    return SubgroupEstimate(**fields)


def estimate_report(tree: RegressionTree,
                    train: Dataset,
                    est: Dataset,
                    targets,
                    config: CdtConfig,
                    *,
                    method: str = 'cdt',
                    notes=(),
                    in_sample_flagged: int = 0) -> CdtReport:
    '''
    Honest estimation and diagnostics for a student tree already grown on
    the training split against `targets`.
    '''

    targets = np.asarray(targets, dtype=float)
    warnings = list(notes)
    partition = partition_from_tree(tree, train.feature_names)
    train_membership = assign(partition, train)
    est_membership = assign(partition, est)

    e_hat = None
    if config.dr:
        if config.dr_propensity is not None:
            e_hat = np.full(est.n, config.dr_propensity)
        else:
            model = fit_propensity(est.x, est.z)
            if model.separated:
                warnings.append('propensity model separated the arms; scores clipped to [0.01, 0.99]')
            e_hat = model.scores

    dropped: list[str] = []
    estimates, nodes = [], []
    for g, subgroup in enumerate(partition.subgroups):
        rows = train_membership == g
        student_mean = float(targets[rows].mean())
        estimate = _estimate_subgroup(subgroup, g, est, est_membership, student_mean, e_hat, dropped)
        if estimate.undefined:
            warnings.append(f'subgroup "{subgroup.label}" has {estimate.n_g1} treated and '
                            f'{estimate.n_g0} control estimation units; estimate undefined')
        estimates.append(estimate)
        nodes.append(_node_summary(subgroup, train, targets, rows))
    if dropped:
        warnings.append(f'collinear covariates dropped from the weighted-adjusted fit: '
                        f'{", ".join(sorted(set(dropped)))}')

    try:
        overall_tau = subgroup_dim(est, np.zeros(est.n, dtype=np.int64), 0)
    except UndefinedEstimateError:
        overall_tau = None
    test = heterogeneity_test(estimates, literal=config.literal_heterogeneity_test,
                              overall_tau=overall_tau)
    if not test.performed:
        logger.info('heterogeneity test skipped: %s', test.skipped_reason)

    residual = predict(tree, train.x) - targets
    diagnostics = Diagnostics(teacher=config.teacher.name if method == 'cdt' else method,
                              student_rmse=float(np.sqrt(np.mean(residual ** 2))),
                              student_depth=tree.depth,
                              student_leaves=tree.n_leaves,
                              n_train=train.n,
                              n_est=est.n,
                              train_arm_counts=train.arm_counts(),
                              est_arm_counts=est.arm_counts(),
                              in_sample_flagged=in_sample_flagged,
                              nodes=tuple(nodes))

    for message in warnings:
        logger.warning(message)
    return CdtReport(method=method,
                     config=config,
                     seed=config.seed,
                     partition=partition,
                     estimates=tuple(estimates),
                     overall_tau=overall_tau,
                     heterogeneity=test,
                     diagnostics=diagnostics,
                     warnings=tuple(warnings),
                     student_tree=tree)


def run_cdt(dataset: Dataset, config: CdtConfig = CdtConfig(), n_jobs: int = 1) -> CdtReport:
    '''
    Fit a causal distillation tree and estimate subgroup effects honestly.

    Parameters:
        dataset : Dataset
            Full data; split internally by config.pi_train.
        config : CdtConfig
            Split fraction, teacher, student pruning, seed and inference options.
        n_jobs : int
            joblib workers for the teacher; the report does not depend on it.

    Returns:
        CdtReport
    '''

    train_idx, est_idx = honest_split(dataset, config.pi_train, config.seed)
    train, est = dataset.subset(train_idx), dataset.subset(est_idx)
    logger.info('honest split: %d training / %d estimation units', train.n, est.n)

    teacher = fit_teacher(train, config.teacher, seed=child_seed(config.seed, 'teacher'), n_jobs=n_jobs)
    tree, notes = fit_student(train.x, teacher.tau_hat_d, config.student, config.seed,
                              feature_names=train.feature_names)
    return estimate_report(tree, train, est, teacher.tau_hat_d, config,
                           notes=notes,
                           in_sample_flagged=int(teacher.in_sample_flags.sum()))
