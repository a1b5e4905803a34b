'''
Regression baselines: outcome on covariates, treatment and every
treatment-by-covariate interaction. A covariate counts as selected when its
interaction is significant (OLS) or survives the L1 penalty (Lasso).
'''

import logging
from dataclasses import dataclass

import numpy as np
import statsmodels.api as sm

from ..models.data import Dataset
from ..models.errors import DataValidationError
from ..models.seeds import rng_for

logger = logging.getLogger(__name__)

LASSO_FOLDS = 5
LASSO_PATH_LENGTH = 20
LASSO_MIN_RATIO = 1e-3
LASSO_TOL = 1e-7


@dataclass(frozen=True)
class InteractionFit:

    '''Selected effect modifiers and per-unit CATE of an interacted regression'''

    method: str
    selected: frozenset
    interaction_coefs: np.ndarray
    cate: np.ndarray


def interaction_design(x, z) -> np.ndarray:
    '''Columns [Z, X_1..X_p, Z*X_1..Z*X_p] (no intercept).'''
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    return np.column_stack([z, x, z * x])


def _cate(x, treatment_coef: float, interaction_coefs: np.ndarray) -> np.ndarray:
    return treatment_coef + np.asarray(x, dtype=float) @ interaction_coefs


def interacted_ols(data: Dataset, level: float = 0.05) -> InteractionFit:
    '''
    Least squares with an intercept; covariate j is selected when the
    p-value of Z*X_j is below the level.
    '''

    p = data.p
    design = sm.add_constant(interaction_design(data.x, data.z), has_constant='add')
    if data.n <= design.shape[1]:
        raise DataValidationError(f'interacted regression needs more than {design.shape[1]} units, got {data.n}')

    fit = sm.OLS(data.y, design).fit()
    params, pvalues = np.asarray(fit.params), np.asarray(fit.pvalues)
    interactions = params[2 + p:]
    selected = frozenset(int(j) for j in np.flatnonzero(pvalues[2 + p:] < level))
    return InteractionFit(method='interacted-ols',
                          selected=selected,
                          interaction_coefs=interactions,
                          cate=_cate(data.x, float(params[1]), interactions))


def _standardize(design: np.ndarray, y: np.ndarray):
    centre, scale = design.mean(axis=0), design.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (design - centre) / scale, y - y.mean(), centre, scale


def _lasso_path(design: np.ndarray, y: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    '''Coefficients (standardized scale) for each alpha, warm-started down the path.'''
    model = sm.OLS(y, design)
    coefs = np.zeros((alphas.size, design.shape[1]))
    start = np.zeros(design.shape[1])
    for k, alpha in enumerate(alphas):
        start = np.asarray(model.fit_regularized(method='elastic_net', alpha=alpha, L1_wt=1.0,
                                                 start_params=start, cnvrg_tol=LASSO_TOL).params)
        coefs[k] = start
    return coefs


def interacted_lasso(data: Dataset, seed: int = 0, folds: int = LASSO_FOLDS) -> InteractionFit:
    '''
    L1-penalized least squares on standardized columns with an unpenalized
    intercept. The penalty is chosen by K-fold CV over a log-spaced path
    from the smallest all-zero penalty down, taking the largest penalty
    within one standard error of the lowest CV error (glmnet's lambda.1se).
    '''

    p = data.p
    design = interaction_design(data.x, data.z)
    if data.n < 2 * folds:
        raise DataValidationError(f'{folds}-fold Lasso needs at least {2 * folds} units, got {data.n}')

    xs, yc, centre, scale = _standardize(design, data.y)
    alpha_max = float(np.max(np.abs(xs.T @ yc)) / data.n)
    if not alpha_max > 0:
        raise DataValidationError('outcome is constant; the Lasso path is empty')
    alphas = alpha_max * np.logspace(0, np.log10(LASSO_MIN_RATIO), LASSO_PATH_LENGTH)

    rng = rng_for(seed, 'lasso-folds')
    fold_of = np.empty(data.n, dtype=np.int64)
    fold_of[rng.permutation(data.n)] = np.arange(data.n) % folds
    fold_errors = np.zeros((folds, alphas.size))
    for fold in range(folds):
        held_out = fold_of == fold
        train_x, train_y, f_centre, f_scale = _standardize(design[~held_out], data.y[~held_out])
        coefs = _lasso_path(train_x, train_y, alphas)
        test_x = (design[held_out] - f_centre) / f_scale
        pred = data.y[~held_out].mean() + test_x @ coefs.T
        fold_errors[fold] = np.mean((data.y[held_out][:, None] - pred) ** 2, axis=0)

    cv_error = fold_errors.mean(axis=0)
    cv_se = fold_errors.std(axis=0, ddof=1) / np.sqrt(folds)
    best = int(np.argmin(cv_error))
    chosen = int(np.flatnonzero(cv_error <= cv_error[best] + cv_se[best])[0])
    logger.debug('interacted lasso: alpha %.4g (%d of %d on the path)', alphas[chosen], chosen, alphas.size)

    coefs = _lasso_path(xs, yc, alphas[:chosen + 1])[-1] / scale
    interactions = coefs[1 + p:]
    return InteractionFit(method='interacted-lasso',
                          selected=frozenset(int(j) for j in np.flatnonzero(interactions != 0)),
                          interaction_coefs=interactions,
                          cate=_cate(data.x, float(coefs[0]), interactions))
