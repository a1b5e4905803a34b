'''
Unit tests for honest subgroup inference: difference in means, its
variance, the heterogeneity test, the propensity model and the
weighted-adjusted estimator.
'''

import unittest
from unittest import mock

import numpy as np
from scipy import stats
from scipy.special import expit

from src.models.data import Dataset, Subgroup
from src.models.errors import EstimationError, UndefinedEstimateError
from src.pipeline import inference
from src.pipeline.cdt import SubgroupEstimate
from src.pipeline.inference import (
    dr_weighted_adjusted,
    fit_propensity,
    heterogeneity_test,
    ipw_weights,
    subgroup_dim,
    subgroup_variance,
)


def _estimate(tau, var, undefined=False) -> SubgroupEstimate:
    return SubgroupEstimate(subgroup=Subgroup(), tau_hat=tau, var_hat=var, n_g=10, n_g1=5, n_g0=5,
                            student_mean=0.0, undefined=undefined)


class TestDifferenceInMeans(unittest.TestCase):
    '''
    Tests cover:
    - The point estimate and its variance on a hand-computed example.
    - Membership restricting the rows used.
    - Undefined estimates for thin arms.
    - Unbiasedness and variance over re-randomizations of a fixed population.
    '''

    def setUp(self):
        '''Set up two subgroups; group 1 has a single control unit.'''
        self.data = Dataset.from_arrays(np.zeros((10, 1)),
                                        [1, 1, 1, 0, 0, 0, 1, 1, 1, 0],
                                        [4.0, 5.0, 6.0, 1.0, 2.0, 3.0, 9.0, 9.0, 9.0, 0.0])
        self.membership = np.array([0, 0, 0, 0, 0, 0, 1, 1, 1, 1])

    def test_dim(self):
        '''Test that treated mean 5 minus control mean 2 gives 3.'''
        self.assertAlmostEqual(subgroup_dim(self.data, self.membership, 0), 3.0)

    def test_variance(self):
        '''Test s1^2 / n1 + s0^2 / n0 with both sample variances equal to 1.'''
        self.assertAlmostEqual(subgroup_variance(self.data, self.membership, 0), 2.0 / 3.0)

    def test_single_control(self):
        '''Test that one control unit still gives a point estimate but no variance.'''
        self.assertAlmostEqual(subgroup_dim(self.data, self.membership, 1), 9.0)

        with self.assertRaises(UndefinedEstimateError):
            subgroup_variance(self.data, self.membership, 1)

    def test_empty_arm(self):
        '''Test that a subgroup with no treated units is undefined.'''
        membership = np.where(self.data.z == 1, 0, 1)

        with self.assertRaises(UndefinedEstimateError):
            subgroup_dim(self.data, membership, 1)


    def test_rerandomization_moments(self):
        '''Test mean and spread of the estimate over 2000 complete randomizations with a constant effect.'''
        rng = np.random.default_rng(21)
        n, tau = 200, 1.5
        x = rng.standard_normal((n, 1))
        y0 = x[:, 0] + rng.standard_normal(n)
        y1 = y0 + tau
        membership = np.zeros(n, dtype=int)

        estimates, variances = [], []
        for _ in range(2000):
            z = np.zeros(n, dtype=int)
            z[rng.permutation(n)[:n // 2]] = 1
            data = Dataset.from_arrays(x, z, np.where(z == 1, y1, y0))
            estimates.append(subgroup_dim(data, membership, 0))
            variances.append(subgroup_variance(data, membership, 0))
        estimates = np.array(estimates)

        mc_se = estimates.std(ddof=1) / np.sqrt(estimates.size)
        self.assertLess(abs(estimates.mean() - tau), 3 * mc_se)
        self.assertAlmostEqual(np.mean(variances) / estimates.var(ddof=1), 1.0, delta=0.15)


class TestHeterogeneityTest(unittest.TestCase):
    '''
    Tests cover:
    - Cochran's Q on a two-group example.
    - The contrast-vs-overall variant with df = G.
    - Skipping for a single group or an undefined variance.
    - Rejection rate near 0.05 when every effect is equal.
    '''

    def test_cochran_q(self):
        '''Test Q = 2 on df 1 for effects 0 and 2 with unit variances.'''
        test = heterogeneity_test([_estimate(0.0, 1.0), _estimate(2.0, 1.0)])

        self.assertTrue(test.performed)
        self.assertAlmostEqual(test.statistic, 2.0)
        self.assertEqual(test.df, 1)
        self.assertAlmostEqual(test.p_value, stats.chi2.sf(2.0, 1))
        self.assertAlmostEqual(test.p_value, 0.1573, places=4)

    def test_equal_effects(self):
        '''Test that identical effects give a statistic of zero and p-value one.'''
        test = heterogeneity_test([_estimate(1.0, 0.5), _estimate(1.0, 2.0), _estimate(1.0, 1.0)])

        self.assertAlmostEqual(test.statistic, 0.0)
        self.assertAlmostEqual(test.p_value, 1.0)

    def test_contrast_vs_overall(self):
        '''Test the literal variant against an overall effect of 1.'''
        test = heterogeneity_test([_estimate(0.0, 1.0), _estimate(2.0, 1.0)],
                                  literal=True, overall_tau=1.0)

        self.assertEqual(test.method, 'contrast-vs-overall')
        self.assertEqual(test.df, 2)
        self.assertAlmostEqual(test.p_value, np.exp(-1.0))

    def test_contrast_needs_overall(self):
        '''Test that the literal variant without an overall effect raises a ValueError.'''
        with self.assertRaises(ValueError):
            heterogeneity_test([_estimate(0.0, 1.0), _estimate(2.0, 1.0)], literal=True)

    def test_size_under_null(self):
        '''Test that two groups with no effect difference reject in 3% to 7% of 1000 trials.'''
        rng = np.random.default_rng(33)
        n = 400
        membership = np.repeat([0, 1], n // 2)
        rejections = 0
        for _ in range(1000):
            z = np.tile(np.repeat([0, 1], n // 4), 2)
            y = 1.0 * z + rng.standard_normal(n)
            data = Dataset.from_arrays(np.zeros((n, 1)), z, y)
            estimates = [_estimate(subgroup_dim(data, membership, g), subgroup_variance(data, membership, g))
                         for g in (0, 1)]
            rejections += heterogeneity_test(estimates).p_value < 0.05

        self.assertGreaterEqual(rejections, 30)
        self.assertLessEqual(rejections, 70)

    def test_skipped(self):
        '''Test the skip reasons for one group and an undefined variance.'''
        self.assertFalse(heterogeneity_test([_estimate(0.0, 1.0)]).performed)

        test = heterogeneity_test([_estimate(0.0, 1.0), _estimate(2.0, None, undefined=True)])
        self.assertIsNone(test.p_value)
        self.assertIn('variance undefined', test.skipped_reason)


class TestPropensity(unittest.TestCase):
    '''
    Tests cover:
    - Recovery of logistic coefficients.
    - Perfect separation.
    - Fitting failures surfacing as estimation errors.
    - Inverse-propensity weights.
    '''

    def test_recovers_coefficients(self):
        '''Test that the fitted intercept and slope are close to the truth.'''
        rng = np.random.default_rng(0)
        x = rng.standard_normal(4000)
        z = rng.binomial(1, expit(0.5 + x))
        model = fit_propensity(x, z)

        self.assertTrue(model.converged)
        np.testing.assert_allclose(model.params, [0.5, 1.0], atol=0.15)
        self.assertTrue(np.all((model.scores >= 0.01) & (model.scores <= 0.99)))
        np.testing.assert_allclose(model.predict(x), model.scores)

    def test_perfect_separation(self):
        '''Test that separated arms are flagged and scores stay inside the clip bounds.'''
        x = np.linspace(-1, 1, 50)
        z = (x > 0).astype(int)

        with self.assertLogs('src.pipeline.inference', level='WARNING'):
            model = fit_propensity(x, z)

        self.assertTrue(model.separated)
        self.assertTrue(np.all((model.scores >= 0.01) & (model.scores <= 0.99)))

    def test_single_arm(self):
        '''Test that all-treated data raises an UndefinedEstimateError.'''
        with self.assertRaises(UndefinedEstimateError):
            fit_propensity(np.zeros(5), np.ones(5))

    def test_fit_failure(self):
        '''Test that a ValueError from the GLM fit becomes an EstimationError.'''
        x = np.linspace(-1, 1, 20)
        z = np.tile([0, 1], 10)

        with mock.patch.object(inference.sm, 'GLM', side_effect=ValueError('NaN in design')):
            with self.assertRaises(EstimationError) as context:
                fit_propensity(x, z)

        self.assertIn('NaN in design', str(context.exception))

    def test_ipw_weights(self):
        '''Test weights 1 / e and 1 / (1 - e) at e = 0.25.'''
        np.testing.assert_allclose(ipw_weights([1, 0], [0.25, 0.25]), [4.0, 4.0 / 3.0])


class TestWeightedAdjusted(unittest.TestCase):
    '''
    Tests cover:
    - Agreement with the true effect in a randomized trial.
    - Bias removal under confounded assignment.
    - Collinear covariates and small subgroups.
    '''

    def test_randomized(self):
        '''Test that the adjusted estimate is close to the effect and tighter than the DIM.'''
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1000, 2))
        z = rng.binomial(1, 0.5, 1000)
        y = 2 * x[:, 0] + 2.0 * z + 0.1 * rng.standard_normal(1000)
        data = Dataset.from_arrays(x, z, y)
        membership = np.zeros(1000, dtype=int)

        tau, var = dr_weighted_adjusted(data, membership, 0, 0.5)

        self.assertLess(abs(tau - 2.0), 0.05)
        self.assertLess(var, subgroup_variance(data, membership, 0))
        self.assertLess(abs(subgroup_dim(data, membership, 0) - 2.0), 0.4)

    def test_confounded(self):
        '''Test that estimated propensities remove the bias the DIM carries.'''
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3000, 1))
        z = rng.binomial(1, expit(x[:, 0]))
        y = 2 * x[:, 0] + 1.0 * z + 0.1 * rng.standard_normal(3000)
        data = Dataset.from_arrays(x, z, y)
        membership = np.zeros(3000, dtype=int)
        e_hat = fit_propensity(x, z).scores

        tau, _ = dr_weighted_adjusted(data, membership, 0, e_hat)

        self.assertLess(abs(tau - 1.0), 0.1)
        self.assertGreater(subgroup_dim(data, membership, 0) - 1.0, 0.5)

    def test_collinear_covariate(self):
        '''Test that a duplicated column is dropped and reported.'''
        rng = np.random.default_rng(3)
        x1 = rng.standard_normal(200)
        x = np.column_stack([x1, rng.standard_normal(200), x1])
        z = np.tile([0, 1], 100)
        y = x1 + z + 0.1 * rng.standard_normal(200)
        data = Dataset.from_arrays(x, z, y, feature_names=['age', 'bmi', 'age_copy'])
        dropped = []

        tau, var = dr_weighted_adjusted(data, np.zeros(200, dtype=int), 0, 0.5, dropped=dropped)

        self.assertEqual(dropped, ['age_copy'])
        self.assertLess(abs(tau - 1.0), 0.1)
        self.assertGreater(var, 0.0)

    def test_too_few_units(self):
        '''Test that n_g < p + 3 is undefined.'''
        data = Dataset.from_arrays(np.arange(8.0).reshape(4, 2), [1, 0, 1, 0], [1.0, 0.0, 2.0, 1.0])

        with self.assertRaises(UndefinedEstimateError):
            dr_weighted_adjusted(data, np.zeros(4, dtype=int), 0, 0.5)


if __name__ == '__main__':
    unittest.main()
