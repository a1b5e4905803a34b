'''
Teacher selection by bootstrap subgroup stability.

Each candidate teacher is fit once on the training data. Pairs of bootstrap
resamples of (X, teacher prediction) each grow a student tree; both trees
are pruned to every requested depth and compared by the similarity index on
the original training units. The teacher whose students agree most, on
average over depths, is recommended.
'''

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..models.config import SelectionConfig, TeacherSpec, TreeParams
from ..models.data import Dataset
from ..models.seeds import child_seed, rng_for
from ..teachers.metalearners import fit_teacher
from ..trees.cart import apply, fit_tree
from ..trees.pruning import prune_to_depth
from .ssi import jaccard_ssi

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapRecord:

    '''One bootstrap pair at one depth'''

    teacher: str
    depth: int
    bootstrap: int
    ssi: float
    depth_mismatch: bool
    features: tuple[frozenset, frozenset]


def _teacher_labels(teachers: Sequence[TeacherSpec]) -> list[str]:
    names = [t.name for t in teachers]
    return [name if names.count(name) == 1 else f'{name}-{k + 1}' for k, name in enumerate(names)]


def _student_params(params: TreeParams, depths: Sequence[int]) -> TreeParams:
    # Growth is top-down: a tree grown to the deepest requested depth and
    # pruned to d equals a tree grown to d
    deepest = max(depths)
    if params.max_depth is None or params.max_depth > deepest:
        return params.model_copy(update={'max_depth': deepest})
    return params


def bootstrap_ssi(x,
                  tau_hat_d,
                  depths: Sequence[int],
                  params: TreeParams,
                  seed_1: int,
                  seed_2: int) -> list[tuple[int, float, bool, tuple[frozenset, frozenset]]]:
    '''
    Similarity of two bootstrap student trees at each depth.

    Each seed drives one resample and its tree, so equal seeds give
    identical trees.

    Returns:
        (depth, ssi, depth_mismatch, (features_1, features_2)) per depth.
    '''

    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau_hat_d, dtype=float)
    n = tau.shape[0]
    params = _student_params(params, depths)

    trees = []
    for s in (seed_1, seed_2):
        rows = rng_for(s, 'resample').integers(0, n, size=n)
        trees.append(fit_tree(x[rows], tau[rows], params, seed=child_seed(s, 'tree')))

    out = []
    for d in depths:
        pruned = [prune_to_depth(tree, d) for tree in trees]
        result = jaccard_ssi(apply(pruned[0], x), apply(pruned[1], x))
        mismatch = any(t.n_leaves != 2 ** d for t in pruned)
        features = (frozenset(pruned[0].split_features()), frozenset(pruned[1].split_features()))
        out.append((d, result.ssi, mismatch, features))
    return out


@dataclass(frozen=True)
class SelectionResult:

    '''Bootstrap records for every (teacher, depth, bootstrap) plus the recommendation'''

    teachers: tuple[str, ...]
    depths: tuple[int, ...]
    n_bootstraps: int
    records: tuple[BootstrapRecord, ...]
    feature_names: tuple[str, ...]

    def ssi_table(self) -> pd.DataFrame:
        '''Long format: teacher, depth, bootstrap, ssi.'''
        return pd.DataFrame([(r.teacher, r.depth, r.bootstrap, r.ssi) for r in self.records],
                            columns=['teacher', 'depth', 'bootstrap', 'ssi'])

    def summary(self) -> pd.DataFrame:
        '''Mean SSI, its standard error and the depth-mismatch rate per (teacher, depth).'''
        df = pd.DataFrame([(r.teacher, r.depth, r.ssi, r.depth_mismatch) for r in self.records],
                          columns=['teacher', 'depth', 'ssi', 'depth_mismatch'])
        summary = df.groupby(['teacher', 'depth'], sort=False).agg(
            mean_ssi=('ssi', 'mean'),
            se_ssi=('ssi', lambda s: s.std(ddof=1) / np.sqrt(len(s))),
            mismatch_rate=('depth_mismatch', 'mean')).reset_index()
        return summary

    @property
    def recommended(self) -> str:
        '''Teacher with the highest mean SSI averaged over depths; ties go to the first listed.'''
        by_teacher = self.summary().groupby('teacher', sort=False)['mean_ssi'].mean()
        scores = [by_teacher[t] for t in self.teachers]
        return self.teachers[int(np.argmax(scores))]


def select_teacher(train: Dataset,
                   teachers: Sequence[TeacherSpec],
                   depths: Sequence[int] = (1, 2, 3, 4),
                   n_bootstraps: int = 100,
                   student_params: TreeParams = TreeParams(),
                   seed: int = 0,
                   n_jobs: int = 1) -> SelectionResult:
    '''
    Compare candidate teachers by the stability of their students.

    Parameters:
        train : Dataset
            Training data; every teacher is fit on all of it once.
        teachers : sequence of TeacherSpec
        depths : sequence of int
            Student depths to compare at, each >= 1.
        n_bootstraps : int
            Bootstrap pairs per teacher, >= 2.
        student_params : TreeParams
        seed : int
            Pair b of teacher k uses streams (seed, k, b, 1) and (seed, k, b, 2).
        n_jobs : int
            joblib workers over bootstrap pairs.

    Returns:
        SelectionResult
    '''

    config = SelectionConfig(teachers=tuple(teachers), depths=tuple(depths),
                             n_bootstraps=n_bootstraps, student=student_params, seed=seed)
    labels = _teacher_labels(config.teachers)

    records: list[BootstrapRecord] = []
    for k, (label, spec) in enumerate(zip(labels, config.teachers)):
        tau = fit_teacher(train, spec, seed=child_seed(seed, 'teacher', k), n_jobs=n_jobs).tau_hat_d
        pairs = Parallel(n_jobs=n_jobs)(
            delayed(bootstrap_ssi)(train.x, tau, config.depths, config.student,
                                   child_seed(seed, k, b, 1), child_seed(seed, k, b, 2))
            for b in range(config.n_bootstraps))
        for b, per_depth in enumerate(pairs):
            records.extend(BootstrapRecord(teacher=label, depth=d, bootstrap=b, ssi=ssi,
                                           depth_mismatch=mismatch, features=features)
                           for d, ssi, mismatch, features in per_depth)
        logger.info('teacher %s: %d bootstrap pairs done', label, config.n_bootstraps)

    result = SelectionResult(teachers=tuple(labels),
                             depths=config.depths,
                             n_bootstraps=config.n_bootstraps,
                             records=tuple(records),
                             feature_names=train.feature_names)
    logger.info('recommended teacher: %s', result.recommended)
    return result


def feature_stability(result: SelectionResult, wide: bool = False) -> pd.DataFrame:
    '''
    Fraction of bootstrap student trees (two per pair) using each feature at
    least once, per teacher and depth.

    Long format (teacher, depth, feature, frequency) by default; wide=True
    pivots features into columns.
    '''

    rows = []
    for teacher in result.teachers:
        for d in result.depths:
            feature_sets = [fs for r in result.records
                            if r.teacher == teacher and r.depth == d for fs in r.features]
            n_trees = len(feature_sets)
            for j, name in enumerate(result.feature_names):
                used = sum(j in fs for fs in feature_sets)
                rows.append((teacher, d, name, used / n_trees if n_trees else 0.0))
    table = pd.DataFrame(rows, columns=['teacher', 'depth', 'feature', 'frequency'])
    if wide:
        return table.pivot(index=['teacher', 'depth'], columns='feature',
                           values='frequency')[list(result.feature_names)].reset_index()
    return table


def stability_warnings(result: SelectionResult, threshold: float = 0.0) -> list[str]:
    '''Messages for (teacher, depth) cells where pruning missed 2^d leaves.'''
    summary = result.summary()
    flagged = summary[summary['mismatch_rate'] > threshold]
    return [f'{row.teacher} at depth {row.depth}: {row.mismatch_rate:.0%} of bootstrap pairs '
            f'did not reach {2 ** row.depth} subgroups'
            for row in flagged.itertuples()]
