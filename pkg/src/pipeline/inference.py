'''
Honest subgroup inference on the estimation split: difference in means and
its variance, a chi-square test of effect heterogeneity across subgroups,
a logistic propensity model, and the inverse-propensity weighted,
covariate-adjusted (doubly robust) subgroup estimator.
'''

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import statsmodels.api as sm
from pydantic import BaseModel, ConfigDict
from scipy import stats
from scipy.special import expit
from statsmodels.tools.sm_exceptions import PerfectSeparationError, PerfectSeparationWarning

from ..models.data import Dataset
from ..models.errors import EstimationError, UndefinedEstimateError

logger = logging.getLogger(__name__)

PROPENSITY_CLIP = (0.01, 0.99)


def _arm_outcomes(est_data: Dataset, membership, g: int) -> tuple[np.ndarray, np.ndarray]:
    in_group = np.asarray(membership) == g
    treated = est_data.z == 1
    return est_data.y[in_group & treated], est_data.y[in_group & ~treated]


def subgroup_dim(est_data: Dataset, membership, g: int) -> float:
    '''Difference in mean outcome between treated and control units of subgroup g.'''
    y1, y0 = _arm_outcomes(est_data, membership, g)
    if y1.size == 0 or y0.size == 0:
        raise UndefinedEstimateError(f'subgroup {g} has {y1.size} treated and {y0.size} control units')
    return float(y1.mean() - y0.mean())


def subgroup_variance(est_data: Dataset, membership, g: int) -> float:
    '''
    Sample-analog variance of the subgroup difference in means:
    (1 / n_g) * [n_g / n_g1 * s1^2 + n_g / n_g0 * s0^2], which reduces to
    s1^2 / n_g1 + s0^2 / n_g0.
    '''
    y1, y0 = _arm_outcomes(est_data, membership, g)
    n1, n0 = y1.size, y0.size
    if n1 < 2 or n0 < 2:
        raise UndefinedEstimateError(f'variance needs 2 units per arm; subgroup {g} has {n1}/{n0}')
    n_g = n1 + n0
    beta1, beta0 = n_g / n1, n_g / n0
    return float((beta1 * y1.var(ddof=1) + beta0 * y0.var(ddof=1)) / n_g)


class HeterogeneityTest(BaseModel):

    '''Result of the across-subgroup heterogeneity test'''

    model_config = ConfigDict(frozen=True)

    statistic: Optional[float] = None
    df: Optional[int] = None
    p_value: Optional[float] = None
    method: str = 'cochran-q'
    skipped_reason: Optional[str] = None

    @property
    def performed(self) -> bool:
        return self.skipped_reason is None


def heterogeneity_test(estimates: Sequence,
                       literal: bool = False,
                       overall_tau: Optional[float] = None) -> HeterogeneityTest:
    '''
    Chi-square test that all subgroup effects are equal.

    Parameters:
        estimates : sequence of SubgroupEstimate
            Needs tau_hat and var_hat on every entry.
        literal : bool
            False (default): Cochran's Q against the inverse-variance
            weighted mean, df = G - 1.
            True: contrasts against the overall difference in means with a
            diagonal covariance, df = G.
        overall_tau : float, optional
            Overall difference in means; required when literal is True.

    Returns:
        HeterogeneityTest; skipped (with a reason) when G < 2 or any
        variance is undefined or zero.
    '''

    method = 'contrast-vs-overall' if literal else 'cochran-q'
    if len(estimates) < 2:
        return HeterogeneityTest(method=method, skipped_reason='fewer than two subgroups')
    undefined = [e.subgroup.label for e in estimates
                 if e.undefined or e.var_hat is None or not e.var_hat > 0]
    if undefined:
        return HeterogeneityTest(method=method,
                                 skipped_reason=f'variance undefined or zero for: {", ".join(undefined)}')

    tau = np.array([e.tau_hat for e in estimates])
    var = np.array([e.var_hat for e in estimates])
    if literal:
        if overall_tau is None:
            raise ValueError('the contrast-vs-overall test needs the overall difference in means')
        statistic = float(np.sum((tau - overall_tau) ** 2 / var))
        df = len(estimates)
    else:
        weights = 1.0 / var
        pooled = np.sum(weights * tau) / np.sum(weights)
        statistic = float(np.sum(weights * (tau - pooled) ** 2))
        df = len(estimates) - 1
    return HeterogeneityTest(statistic=statistic,
                             df=df,
                             p_value=float(stats.chi2.sf(statistic, df)),
                             method=method)


@dataclass(frozen=True)
class PropensityModel:

    '''Logistic propensity fit; scores are clipped to [0.01, 0.99]'''

    params: np.ndarray
    scores: np.ndarray
    converged: bool
    separated: bool

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        design = np.column_stack([np.ones(x.shape[0]), x])
        return np.clip(expit(design @ self.params), *PROPENSITY_CLIP)


def fit_propensity(x, z, max_iter: int = 100, tol: float = 1e-8) -> PropensityModel:
    '''
    Logistic regression of treatment on covariates (plus intercept) by IRLS.

    Convergence is judged on the change in coefficients. Perfect separation
    is reported through a warning and the clipped scores are returned.
    '''

    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float).reshape(z.shape[0], -1)
    if np.unique(z).size < 2:
        raise UndefinedEstimateError('propensity model needs both treated and control units')
    design = np.column_stack([np.ones(z.shape[0]), x])

    separated = False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        try:
            result = sm.GLM(z, design, family=sm.families.Binomial()).fit(
                maxiter=max_iter, tol=tol, tol_criterion='params')
            params = np.asarray(result.params, dtype=float)
            converged = bool(result.converged)
        except PerfectSeparationError:
            params = np.full(design.shape[1], np.nan)
            converged = False
            separated = True
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise EstimationError(f'propensity model could not be fitted: {exc}') from exc
    separated = separated or any(issubclass(w.category, PerfectSeparationWarning) for w in caught)

    raw = expit(design @ params)
    if not np.all(np.isfinite(raw)):
        raw = z
        separated = True
    elif not converged and np.array_equal(raw > 0.5, z == 1):
        # diverging coefficients that classify every unit correctly
        separated = True
    if separated:
        logger.warning('propensity model: perfect separation, scores converged to the clip bounds')
    elif not converged:
        logger.warning('propensity model did not converge in %d iterations', max_iter)
    return PropensityModel(params=params,
                           scores=np.clip(raw, *PROPENSITY_CLIP),
                           converged=converged,
                           separated=separated)


def ipw_weights(z, e_hat) -> np.ndarray:
    '''1 / e for treated units and 1 / (1 - e) for controls.'''
    z = np.asarray(z)
    e = np.clip(np.asarray(e_hat, dtype=float), *PROPENSITY_CLIP)
    return np.where(z == 1, 1.0 / e, 1.0 / (1.0 - e))


def _independent_columns(design: np.ndarray) -> list[int]:
    '''Greedy left-to-right selection of linearly independent columns.'''
    keep: list[int] = []
    for j in range(design.shape[1]):
        candidate = keep + [j]
        if np.linalg.matrix_rank(design[:, candidate]) == len(candidate):
            keep = candidate
    return keep


def dr_weighted_adjusted(est_data: Dataset,
                         membership,
                         g: int,
                         e_hat,
                         dropped: Optional[list] = None) -> tuple[float, float]:
    '''
    Weighted-adjusted subgroup ATE: weighted least squares of Y on
    (1, Z, X) within subgroup g with inverse-propensity weights, returning
    the Z coefficient and its HC0 sandwich variance.

    Collinear covariates are dropped (with a warning); their names are
    appended to `dropped` when a list is supplied.
    '''

    in_group = np.asarray(membership) == g
    e_hat = np.broadcast_to(np.asarray(e_hat, dtype=float), est_data.z.shape)
    x, z, y, e = est_data.x[in_group], est_data.z[in_group], est_data.y[in_group], e_hat[in_group]
    n_g, p = x.shape
    if n_g < p + 3:
        raise UndefinedEstimateError(f'weighted-adjusted estimate needs n_g >= p + 3 = {p + 3}, got {n_g}')
    if np.unique(z).size < 2:
        raise UndefinedEstimateError(f'subgroup {g} has units from one arm only')

    design = np.column_stack([np.ones(n_g), z, x])
    keep = _independent_columns(design)
    if keep[:2] != [0, 1]:
        raise UndefinedEstimateError(f'treatment is collinear with the intercept in subgroup {g}')
    lost = [est_data.feature_names[j - 2] for j in range(design.shape[1]) if j not in keep]
    if lost:
        logger.warning('subgroup %d: dropped collinear covariates %s', g, lost)
        if dropped is not None:
            dropped.extend(lost)

    fit = sm.WLS(y, design[:, keep], weights=ipw_weights(z, e)).fit(cov_type='HC0')
    params = np.asarray(fit.params)
    cov = np.asarray(fit.cov_params())
    return float(params[1]), float(cov[1, 1])
