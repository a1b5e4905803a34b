'''
Synthetic trials with known subgroup structure.

Covariates are iid standard normal; treatment is a fair coin unless a
propensity slope on X1 is configured. The effect has one of three step
structures in X1 and X2 plus optional Gaussian noise, scaled so that the
step signal explains a chosen share (pve) of the effect's variance.
'''

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import Field, model_validator
from scipy.special import erf, expit

from ..models.config import StrictModel
from ..models.data import Dataset
from ..models.seeds import rng_for

OUTCOME_NOISE_SD = 0.1


class DgpKind(str, Enum):

    '''Step structure of the true effect'''

    AND = 'and'             # 2 * 1{X1 > 0} * 1{X2 > 0.5}
    ADDITIVE = 'additive'   # 2 * 1{X1 > 0} - 1{X2 < -0.5}
    OR = 'or'               # 2 * 1{X1 > 0} - 1{|X2| > 0.5}


class OutcomeModel(str, Enum):

    '''Outcome equation around the effect'''

    CATE_ONLY = 'cate-only'                     # Y = Z * tau + nu
    LINEAR_COVARIATES = 'linear-covariates'     # Y = Z * tau + X3 + X4 + nu


class DgpConfig(StrictModel):

    '''One simulated trial'''

    dgp: DgpKind = DgpKind.AND
    outcome: OutcomeModel = OutcomeModel.CATE_ONLY
    n: int = Field(default=500, ge=2)
    p: int = Field(default=10, ge=2)
    pve: float = Field(default=1.0, gt=0, le=1)
    seed: int = Field(default=0, ge=0)
    propensity_slope: float = Field(default=0.0, description='e(x) = logistic(slope * X1); 0 is a fair coin')

    @model_validator(mode='after')
    def _check_columns(self) -> 'DgpConfig':
        if self.outcome is OutcomeModel.LINEAR_COVARIATES and self.p < 4:
            raise ValueError(f'the linear-covariates outcome uses X3 and X4, so p must be >= 4 (got {self.p})')
        return self


def normal_cdf(x):
    '''Standard normal CDF, 0.5 * (1 + erf(x / sqrt(2))).'''
    return 0.5 * (1.0 + erf(np.asarray(x, dtype=float) / math.sqrt(2.0)))


def signal_variance(dgp: DgpKind) -> float:
    '''Variance of the noiseless effect under independent standard normal covariates.'''
    if dgp is DgpKind.AND:
        prob = 0.5 * (1.0 - float(normal_cdf(0.5)))
        return 4.0 * prob * (1.0 - prob)
    if dgp is DgpKind.ADDITIVE:
        q = float(normal_cdf(-0.5))
        return 4.0 * 0.25 + q * (1.0 - q)
    r = 2.0 * float(normal_cdf(-0.5))
    return 1.0 + r * (1.0 - r)


def pve_to_sigma(dgp: DgpKind, pve: float) -> float:
    '''Effect-noise SD giving signal / (signal + noise) = pve.'''
    if not 0 < pve <= 1:
        raise ValueError(f'pve must lie in (0, 1], got {pve}')
    return math.sqrt(signal_variance(dgp) * (1.0 / pve - 1.0))


def expected_tau(dgp: DgpKind, x) -> np.ndarray:
    '''E[tau | X] for each row of x.'''
    x = np.asarray(x, dtype=float)
    x1, x2 = x[:, 0], x[:, 1]
    if dgp is DgpKind.AND:
        return 2.0 * ((x1 > 0) & (x2 > 0.5))
    if dgp is DgpKind.ADDITIVE:
        return 2.0 * (x1 > 0) - 1.0 * (x2 < -0.5)
    return 2.0 * (x1 > 0) - 1.0 * ((x2 > 0.5) | (x2 < -0.5))


TRUE_THRESHOLDS = {
    DgpKind.AND: {0: (0.0,), 1: (0.5,)},
    DgpKind.ADDITIVE: {0: (0.0,), 1: (-0.5,)},
    DgpKind.OR: {0: (0.0,), 1: (-0.5, 0.5)},
}


@dataclass(frozen=True)
class GroundTruth:

    '''Known structure of a simulated trial'''

    dgp: DgpKind
    sigma_tau: float
    propensity_slope: float = 0.0

    @property
    def true_features(self) -> frozenset:
        return frozenset({0, 1})

    @property
    def true_thresholds(self) -> dict[int, tuple[float, ...]]:
        return TRUE_THRESHOLDS[self.dgp]

    def tau(self, x) -> np.ndarray:
        return expected_tau(self.dgp, x)

    def propensity(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return expit(self.propensity_slope * x[:, 0])

    def marginal_tau(self) -> float:
        '''E[tau] over the covariate distribution.'''
        if self.dgp is DgpKind.AND:
            return 1.0 - float(normal_cdf(0.5))
        if self.dgp is DgpKind.ADDITIVE:
            return 1.0 - float(normal_cdf(-0.5))
        return 1.0 - 2.0 * float(normal_cdf(-0.5))


def gen_dataset(config: DgpConfig) -> tuple[Dataset, GroundTruth, np.ndarray]:
    '''
    Draw one trial.

    Draw order is fixed (X, Z, effect noise, outcome noise) from the single
    stream (seed, 'dgp'), so a seed always reproduces the same data.

    Returns:
        (dataset, truth, tau) with tau the realized per-unit effect.
    '''

    rng = rng_for(config.seed, 'dgp')
    n, p = config.n, config.p
    truth = GroundTruth(dgp=config.dgp,
                        sigma_tau=pve_to_sigma(config.dgp, config.pve),
                        propensity_slope=config.propensity_slope)

    x = rng.standard_normal((n, p))
    z = (rng.random(n) < truth.propensity(x)).astype(np.int8)
    tau = truth.tau(x) + rng.normal(0.0, truth.sigma_tau, n)
    y = z * tau + rng.normal(0.0, OUTCOME_NOISE_SD, n)
    if config.outcome is OutcomeModel.LINEAR_COVARIATES:
        y = y + x[:, 2] + x[:, 3]

    return Dataset.from_arrays(x, z, y), truth, tau
