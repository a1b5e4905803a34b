'''
Unit tests for the teacher models: forests, boosting and the T/S/R
learners with their out-of-sample predictions.
'''

import unittest

import numpy as np

from src.models.config import ForestParams, GbtParams, TeacherKind, TeacherSpec
from src.models.data import Dataset
from src.models.errors import DataValidationError, StructuralError
from src.teachers.ensembles import fit_forest, fit_gbt
from src.teachers.metalearners import fit_teacher, r_learner_pseudo_outcome

FAST_FOREST = ForestParams(n_trees=40)
FAST_GBT = GbtParams(n_rounds=40)


def _effect_data(n=400, seed=0) -> Dataset:
    '''Randomized trial with effect 2 when X1 > 0 and 0 otherwise.'''
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    z = rng.binomial(1, 0.5, n)
    tau = np.where(x[:, 0] > 0, 2.0, 0.0)
    y = x[:, 1] + z * tau + 0.1 * rng.standard_normal(n)
    return Dataset.from_arrays(x, z, y)


def _spec(kind: TeacherKind) -> TeacherSpec:
    return TeacherSpec(kind=kind, forest=FAST_FOREST, gbt=FAST_GBT, crossfit_repeats=2)


def _separation(data: Dataset, tau_hat: np.ndarray) -> float:
    high = data.x[:, 0] > 0
    return float(tau_hat[high].mean() - tau_hat[~high].mean())


class TestEnsembles(unittest.TestCase):
    '''
    Tests cover:
    - Forest out-of-bag bookkeeping and worker-count independence.
    - Boosting loss decreasing round by round.
    - Weight validation.
    '''

    def setUp(self):
        '''Set up a smooth regression problem.'''
        rng = np.random.default_rng(1)
        self.x = rng.uniform(-1, 1, size=(150, 2))
        self.y = 3 * self.x[:, 0] + 0.1 * rng.standard_normal(150)

    def test_forest_oob(self):
        '''Test the in-bag matrix shape and that most rows have out-of-bag trees.'''
        forest = fit_forest(self.x, self.y, FAST_FOREST)

        self.assertEqual(forest.in_bag.shape, (40, 150))
        self.assertEqual(forest.oob_prediction.shape, (150,))
        self.assertEqual(int(forest.oob_flags.sum()), int((forest.in_bag.min(axis=0) > 0).sum()))
        self.assertGreater(np.corrcoef(forest.oob_prediction, self.y)[0, 1], 0.9)

    def test_forest_workers(self):
        '''Test that the forest is the same for one and two workers.'''
        one = fit_forest(self.x, self.y, ForestParams(n_trees=8, seed=4), n_jobs=1)
        two = fit_forest(self.x, self.y, ForestParams(n_trees=8, seed=4), n_jobs=2)

        np.testing.assert_array_equal(one.oob_prediction, two.oob_prediction)

    def test_forest_bad_mtry(self):
        '''Test that mtry larger than p raises a StructuralError.'''
        with self.assertRaises(StructuralError):
            fit_forest(self.x, self.y, ForestParams(n_trees=2, mtry=3))

    def test_gbt_loss_decreases(self):
        '''Test that full-sample boosting never increases the training loss.'''
        model = fit_gbt(self.x, self.y, FAST_GBT)
        losses = np.array(model.training_loss)

        self.assertEqual(len(model.trees), 40)
        self.assertTrue(np.all(np.diff(losses) <= 1e-12))
        self.assertLess(losses[-1], 0.1 * np.var(self.y))

    def test_gbt_negative_weight(self):
        '''Test that negative sample weights are rejected.'''
        weights = np.ones(150)
        weights[0] = -1.0

        with self.assertRaises(StructuralError):
            fit_gbt(self.x, self.y, FAST_GBT, sample_weight=weights)

    def test_gbt_stump(self):
        '''Test that a depth-zero stage model predicts the weighted mean.'''
        model = fit_gbt(self.x, self.y, GbtParams(n_rounds=3, max_depth=0))

        np.testing.assert_allclose(model.predict(self.x), self.y.mean())


class TestPseudoOutcome(unittest.TestCase):
    '''
    Tests cover:
    - The residual-on-residual pseudo-outcome and its weights.
    - Propensity clipping.
    '''

    def test_values(self):
        '''Test pseudo-outcomes for one treated and one control unit.'''
        pseudo, weights = r_learner_pseudo_outcome([1.0, 3.0], [1, 0], [0.0, 1.0], [0.5, 0.5])

        np.testing.assert_allclose(pseudo, [2.0, -4.0])
        np.testing.assert_allclose(weights, [0.25, 0.25])

    def test_clipping(self):
        '''Test that extreme propensities are clipped to [0.01, 0.99].'''
        _, weights = r_learner_pseudo_outcome([1.0, 1.0], [1, 0], [0.0, 0.0], [0.0, 1.0])

        np.testing.assert_allclose(weights, [0.99 ** 2, 0.99 ** 2])


class TestFitTeacher(unittest.TestCase):
    '''
    Tests cover:
    - Effect recovery by the forest and R-learner teachers.
    - Cross-fit bookkeeping for the S-learner.
    - The noise teacher as a permutation of the forest teacher.
    - Determinism and single-arm rejection.
    '''

    @classmethod
    def setUpClass(cls):
        '''Set up one trial shared by every test.'''
        cls.data = _effect_data()

    def test_t_learner(self):
        '''Test that forest predictions separate the two effect regions.'''
        output = fit_teacher(self.data, _spec(TeacherKind.T_LEARNER_FOREST), seed=3)

        self.assertEqual(output.tau_hat_d.shape, (self.data.n,))
        self.assertIsNone(output.repeat_predictions)
        self.assertGreater(_separation(self.data, output.tau_hat_d), 1.0)

    def test_r_learner(self):
        '''Test that the R-learner with a known propensity separates the regions.'''
        output = fit_teacher(self.data, _spec(TeacherKind.R_LEARNER_GBT), seed=3)

        self.assertGreater(_separation(self.data, output.tau_hat_d), 1.0)
        self.assertFalse(output.in_sample_flags.any())

    def test_s_learner_crossfit(self):
        '''Test that the output is the mean over repeats and every half holds both arms.'''
        output = fit_teacher(self.data, _spec(TeacherKind.S_LEARNER_GBT), seed=3)

        self.assertEqual(output.repeat_predictions.shape, (2, self.data.n))
        np.testing.assert_allclose(output.tau_hat_d, output.repeat_predictions.mean(axis=0))
        for halves in output.crossfit_halves:
            for h in (0, 1):
                self.assertEqual(set(self.data.z[halves == h].tolist()), {0, 1})

    def test_noise_teacher(self):
        '''Test that the noise teacher reorders the forest teacher's predictions.'''
        forest = fit_teacher(self.data, _spec(TeacherKind.T_LEARNER_FOREST), seed=5)
        noise = fit_teacher(self.data, _spec(TeacherKind.NOISE_TEACHER), seed=5)

        np.testing.assert_allclose(np.sort(noise.tau_hat_d), np.sort(forest.tau_hat_d))
        self.assertLess(abs(_separation(self.data, noise.tau_hat_d)), 1.0)

    def test_deterministic(self):
        '''Test that a fixed seed reproduces the predictions exactly.'''
        spec = _spec(TeacherKind.S_LEARNER_GBT)

        np.testing.assert_array_equal(fit_teacher(self.data, spec, seed=9).tau_hat_d,
                                      fit_teacher(self.data, spec, seed=9).tau_hat_d)

    def test_single_arm(self):
        '''Test that a training split with no controls raises a DataValidationError.'''
        treated = self.data.subset(np.flatnonzero(self.data.z == 1))

        with self.assertRaises(DataValidationError):
            fit_teacher(treated, _spec(TeacherKind.T_LEARNER_FOREST))


if __name__ == '__main__':
    unittest.main()
