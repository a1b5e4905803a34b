'''
First-stage CATE teachers.

Every teacher returns an out-of-sample effect prediction for each training
unit: the T-learner through out-of-bag forest predictions, the S- and
R-learners through repeated two-way cross-fitting averaged over R repeats.
'''

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from ..models.config import TeacherKind, TeacherSpec
from ..models.data import Dataset
from ..models.errors import DataValidationError, EstimationError
from ..models.seeds import child_seed, rng_for
from ..pipeline.inference import PROPENSITY_CLIP, fit_propensity
from .ensembles import fit_forest, fit_gbt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TeacherOutput:

    '''
    Distilled effect predictions for the training units.

    in_sample_flags marks units whose prediction came from a model that saw
    them (only possible for forest units that were in every bag).
    For cross-fitted teachers repeat_predictions (R x n) holds each repeat's
    prediction and crossfit_halves (R x n) the half each unit was in.
    '''

    tau_hat_d: np.ndarray
    spec: TeacherSpec
    in_sample_flags: np.ndarray
    repeat_predictions: Optional[np.ndarray] = None
    crossfit_halves: Optional[np.ndarray] = None


def r_learner_pseudo_outcome(y, z, m_hat, e_hat) -> tuple[np.ndarray, np.ndarray]:
    '''
    R-learner pseudo-outcomes (Y - m(X)) / (Z - e(X)) and weights (Z - e(X))^2.

    Propensities are clipped to [0.01, 0.99] first.
    '''
    e = np.clip(np.asarray(e_hat, dtype=float), *PROPENSITY_CLIP)
    centred_z = np.asarray(z, dtype=float) - e
    pseudo = (np.asarray(y, dtype=float) - np.asarray(m_hat, dtype=float)) / centred_z
    return pseudo, centred_z ** 2


def _t_learner(train: Dataset, spec: TeacherSpec, seed: int, n_jobs: int):
    x, z, y = train.x, train.z, train.y
    tau = np.zeros(train.n)
    flags = np.zeros(train.n, dtype=bool)
    for arm, sign in ((1, 1.0), (0, -1.0)):
        rows = z == arm
        if rows.sum() < 2:
            raise EstimationError(f'T-learner needs at least 2 units in arm {arm}, got {int(rows.sum())}')
        params = spec.forest.model_copy(update={'seed': child_seed(seed, 'arm', arm)})
        forest = fit_forest(x[rows], y[rows], params, n_jobs=n_jobs)
        mu = forest.predict(x)
        # a unit's own arm uses the out-of-bag prediction
        mu[rows] = forest.oob_prediction
        flags[rows] = forest.oob_flags
        tau += sign * mu
    return tau, flags


def _draw_halves(z: np.ndarray, seed: int, r: int) -> np.ndarray:
    '''Arm-stratified half split; each arm is cut in two so both halves hold both arms.'''
    counts = np.bincount(z, minlength=2)
    if counts.min() < 2:
        raise EstimationError(f'cross-fitting needs at least 2 units per arm, got {counts.tolist()}')
    rng = rng_for(seed, 'halves', r)
    halves = np.zeros(z.shape[0], dtype=np.int8)
    for arm in (0, 1):
        members = rng.permutation(np.flatnonzero(z == arm))
        halves[members[members.size // 2:]] = 1
    return halves


def _outcome_crossfit(x: np.ndarray, y: np.ndarray, spec: TeacherSpec, seed: int) -> np.ndarray:
    '''Two-fold cross-fitted m(x) = E[Y | X] by boosting.'''
    n = y.shape[0]
    fold = np.zeros(n, dtype=bool)
    fold[rng_for(seed, 'm-folds').permutation(n)[: n // 2]] = True
    m_hat = np.empty(n)
    for k, rows in enumerate((fold, ~fold)):
        params = spec.gbt.model_copy(update={'seed': child_seed(seed, 'm', k)})
        model = fit_gbt(x[~rows], y[~rows], params)
        m_hat[rows] = model.predict(x[rows])
    return m_hat


def _fit_predict_cate(spec: TeacherSpec,
                      x_in: np.ndarray,
                      z_in: np.ndarray,
                      y_in: np.ndarray,
                      x_out: np.ndarray,
                      seed: int) -> np.ndarray:
    '''Fit a cross-fitted teacher on one half and predict the other half.'''

    gbt = spec.gbt.model_copy(update={'seed': child_seed(seed, 'tau')})

    if spec.kind is TeacherKind.S_LEARNER_GBT:
        model = fit_gbt(np.column_stack([x_in, z_in]), y_in, gbt)
        ones, zeros = np.ones(x_out.shape[0]), np.zeros(x_out.shape[0])
        return (model.predict(np.column_stack([x_out, ones]))
                - model.predict(np.column_stack([x_out, zeros])))

    m_hat = _outcome_crossfit(x_in, y_in, spec, seed)
    if spec.propensity is not None:
        e_hat = np.full(z_in.shape[0], spec.propensity)
    else:
        e_hat = fit_propensity(x_in, z_in).scores
    pseudo, weights = r_learner_pseudo_outcome(y_in, z_in, m_hat, e_hat)
    return fit_gbt(x_in, pseudo, gbt, sample_weight=weights).predict(x_out)


def _crossfit_repeat(train: Dataset, spec: TeacherSpec, seed: int, r: int):
    x, z, y = train.x, train.z, train.y
    halves = _draw_halves(z, seed, r)
    prediction = np.empty(train.n)
    for h in (0, 1):
        fit_rows = halves == h
        prediction[~fit_rows] = _fit_predict_cate(spec, x[fit_rows], z[fit_rows], y[fit_rows],
                                                  x[~fit_rows], child_seed(seed, 'crossfit', r, h))
    return prediction, halves


def fit_teacher(train: Dataset, spec: TeacherSpec, seed: int = 0, n_jobs: int = 1) -> TeacherOutput:
    '''
    Out-of-sample CATE predictions for every training unit.

    Parameters:
        train : Dataset
            Training split; both arms must be present.
        spec : TeacherSpec
            Teacher kind and its model parameters.
        seed : int
            Base seed; forests, cross-fit halves and boosting rounds all use
            streams derived from it.
        n_jobs : int
            joblib workers for forest trees or cross-fit repeats.

    Returns:
        TeacherOutput
    '''

    n_treated, n_control = train.arm_counts()
    if n_treated == 0 or n_control == 0:
        raise DataValidationError('the training data must contain treated and control units')

    if spec.kind in (TeacherKind.T_LEARNER_FOREST, TeacherKind.NOISE_TEACHER):
        tau, flags = _t_learner(train, spec, seed, n_jobs)
        if spec.kind is TeacherKind.NOISE_TEACHER:
            order = rng_for(seed, 'noise').permutation(train.n)
            tau, flags = tau[order], flags[order]
        logger.info('%s teacher: %d of %d units flagged in-sample',
                    spec.name, int(flags.sum()), train.n)
        return TeacherOutput(tau_hat_d=tau, spec=spec, in_sample_flags=flags)

    repeats = Parallel(n_jobs=n_jobs)(
        delayed(_crossfit_repeat)(train, spec, seed, r) for r in range(spec.crossfit_repeats))
    predictions = np.vstack([pred for pred, _ in repeats])
    halves = np.vstack([h for _, h in repeats])
    logger.info('%s teacher: averaged %d cross-fit repeats', spec.name, spec.crossfit_repeats)
    return TeacherOutput(tau_hat_d=predictions.mean(axis=0),
                         spec=spec,
                         in_sample_flags=np.zeros(train.n, dtype=bool),
                         repeat_predictions=predictions,
                         crossfit_halves=halves)
