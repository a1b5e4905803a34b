'''
Accuracy of an estimated partition against a simulated ground truth:
feature selection, split thresholds and subgroup effects.
'''

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..models.data import Partition
from ..models.seeds import rng_for
from .dgp import GroundTruth

logger = logging.getLogger(__name__)

MIN_MC_POINTS = 100
MAX_WIDENINGS = 6


@dataclass(frozen=True)
class SubgroupMetrics:

    '''
    Per-replicate accuracy of one method. Threshold RMSEs are None when a
    feature is never split; the subgroup fields are None for methods that
    return no partition.
    '''

    tp: int
    fp: int
    f1: float
    threshold_rmse: dict
    subgroup_ate_rmse: Optional[float]
    n_subgroups: Optional[int]
    selected: frozenset = frozenset()
    thresholds: dict = field(default_factory=dict)


def selection_scores(selected, truth: GroundTruth) -> tuple[int, int, float]:
    '''(tp, fp, F1) of a set of selected feature indices.'''
    selected, true = set(selected), truth.true_features
    tp = len(selected & true)
    fp = len(selected - true)
    fn = len(true - selected)
    denominator = 2 * tp + fp + fn
    return tp, fp, (2 * tp / denominator if denominator else 0.0)


def evaluate_selection(partition: Partition, truth: GroundTruth) -> tuple[int, int, float]:
    '''(tp, fp, F1) of the features used anywhere in the partition.'''
    return selection_scores(partition.features(), truth)


def split_thresholds(partition: Partition, feature_index: int) -> list[float]:
    '''Distinct split thresholds on one feature, in sorted order.'''
    values = {rule.threshold for subgroup in partition.subgroups
              for rule in subgroup.rules if rule.feature_index == feature_index}
    return sorted(values)


def threshold_rmse(partition: Partition, truth: GroundTruth) -> dict[int, Optional[float]]:
    '''
    RMSE per true feature of each split threshold against the nearest true
    threshold for that feature; None when the feature is never split.

    A split shared by several subgroups' rule paths counts once.
    '''

    out = {}
    for feature, targets in truth.true_thresholds.items():
        splits = split_thresholds(partition, feature)
        if not splits:
            out[feature] = None
            continue
        errors = [min(abs(s - t) for t in targets) for s in splits]
        out[feature] = math.sqrt(float(np.mean(np.square(errors))))
    return out


def subgroup_truths(partition: Partition,
                    truth: GroundTruth,
                    p: int,
                    mc_n: int = 1_000_000,
                    seed: int = 0) -> list[Optional[float]]:
    '''
    Monte Carlo E[tau | X in region] for every subgroup of the partition.

    Regions holding fewer than 100 draws are re-estimated on doubled
    samples, up to six times; a region never reached stays None.
    '''

    rng = rng_for(seed, 'truth-mc')
    x = rng.standard_normal((mc_n, p))
    tau = truth.tau(x)
    values: list[Optional[float]] = []
    for subgroup in partition.subgroups:
        mask = subgroup.mask(x)
        size, widenings = mc_n, 0
        sums, counts = float(tau[mask].sum()), int(mask.sum())
        while counts < MIN_MC_POINTS and widenings < MAX_WIDENINGS:
            widenings += 1
            extra = rng_for(seed, 'truth-mc-widen', widenings).standard_normal((size, p))
            extra_mask = subgroup.mask(extra)
            sums += float(truth.tau(extra)[extra_mask].sum())
            counts += int(extra_mask.sum())
            size *= 2
        if widenings:
            logger.warning('subgroup "%s" had fewer than %d Monte Carlo points; '
                           'sample widened %d time(s) to %d points in region',
                           subgroup.label, MIN_MC_POINTS, widenings, counts)
        values.append(sums / counts if counts else None)
    return values


def subgroup_ate_rmse(report, truth: GroundTruth, mc_n: int = 1_000_000, seed: int = 0) -> Optional[float]:
    '''
    RMSE between estimated and true subgroup effects, subgroups weighted
    equally. Subgroups without an estimate or a reachable truth are left out;
    None when nothing is left.
    '''

    truths = subgroup_truths(report.partition, truth, report.student_tree.n_features,
                             mc_n=mc_n, seed=seed)
    errors = [est.tau_hat - t for est, t in zip(report.estimates, truths)
              if est.tau_hat is not None and t is not None]
    if not errors:
        return None
    return math.sqrt(float(np.mean(np.square(errors))))


def evaluate_report(report, truth: GroundTruth, mc_n: int = 1_000_000, seed: int = 0) -> SubgroupMetrics:
    '''All accuracy metrics for one report.'''
    partition = report.partition
    tp, fp, f1 = evaluate_selection(partition, truth)
    selected = frozenset(partition.features())
    return SubgroupMetrics(tp=tp,
                           fp=fp,
                           f1=f1,
                           threshold_rmse=threshold_rmse(partition, truth),
                           subgroup_ate_rmse=subgroup_ate_rmse(report, truth, mc_n=mc_n, seed=seed),
                           n_subgroups=partition.n_groups,
                           selected=selected,
                           thresholds={j: split_thresholds(partition, j) for j in sorted(selected)})


def evaluate_selected(selected, truth: GroundTruth) -> SubgroupMetrics:
    '''Selection metrics for a method that picks effect modifiers without a partition.'''
    tp, fp, f1 = selection_scores(selected, truth)
    return SubgroupMetrics(tp=tp,
                           fp=fp,
                           f1=f1,
                           threshold_rmse={feature: None for feature in truth.true_thresholds},
                           subgroup_ate_rmse=None,
                           n_subgroups=None,
                           selected=frozenset(selected))
