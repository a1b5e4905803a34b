'''
Unit tests for the configuration models.

This module validates constraint enforcement, cross-field rules and default
values for the tree, teacher, student, pipeline and selection settings, and
the environment-driven application settings.

'''

import os
import unittest
from unittest import mock

from pydantic import ValidationError

from src.models.config import (
    AppSettings,
    CdtConfig,
    CvRule,
    ForestParams,
    GbtParams,
    PruneMode,
    SelectionConfig,
    StudentConfig,
    TeacherKind,
    TeacherSpec,
    TreeParams,
)


class TestTreeParams(unittest.TestCase):
    '''
    Tests cover:
    - rpart-style defaults.
    - The min_split >= 2 * min_leaf cross-field rule.
    - Rejection of unknown fields.
    '''

    def test_defaults(self):
        '''Test that the defaults follow rpart (minbucket 7, minsplit 20, depth 30).'''
        params = TreeParams()

        self.assertEqual(params.min_leaf, 7)
        self.assertEqual(params.min_split, 20)
        self.assertEqual(params.max_depth, 30)
        self.assertIsNone(params.max_thresholds_per_feature)

    def test_min_split_too_small(self):
        '''Test that min_split below twice min_leaf raises a ValidationError.'''
        with self.assertRaises(ValidationError) as context:
            TreeParams(min_leaf=10, min_split=15)

        self.assertIn('min_split', str(context.exception))

    def test_unknown_field_rejected(self):
        '''Test that a misspelt field is rejected rather than ignored.'''
        with self.assertRaises(ValidationError):
            TreeParams(min_leaf=5, min_splt=10)

    def test_frozen(self):
        '''Test that parameters cannot be modified after construction.'''
        params = TreeParams()

        with self.assertRaises(ValidationError):
            params.min_leaf = 3


class TestTeacherSpec(unittest.TestCase):
    '''
    Tests cover:
    - Enum coercion from the CLI spelling of a teacher.
    - The known-propensity rule for randomized designs.
    - Nested parameter defaults.
    '''

    def test_kind_from_string(self):
        '''Test that teacher kinds are coerced from their string values.'''
        spec = TeacherSpec(kind='r-gbt')

        self.assertIs(spec.kind, TeacherKind.R_LEARNER_GBT)
        self.assertEqual(spec.name, 'r-gbt')

    def test_invalid_kind(self):
        '''Test that an unknown teacher name raises a ValidationError.'''
        with self.assertRaises(ValidationError):
            TeacherSpec(kind='causal-forest')

    def test_randomized_needs_propensity(self):
        '''Test that a randomized design without a known propensity is rejected.'''
        with self.assertRaises(ValidationError):
            TeacherSpec(randomized=True, propensity=None)

        spec = TeacherSpec(randomized=False, propensity=None)
        self.assertIsNone(spec.propensity)

    def test_propensity_bounds(self):
        '''Test that the known propensity must lie strictly inside (0, 1).'''
        with self.assertRaises(ValidationError):
            TeacherSpec(propensity=1.0)

    def test_nested_defaults(self):
        '''Test the forest and boosting defaults.'''
        spec = TeacherSpec()

        self.assertEqual(spec.forest.n_trees, 500)
        self.assertEqual(spec.gbt.learning_rate, 0.1)
        self.assertEqual(spec.crossfit_repeats, 50)

    def test_gbt_stage_tree(self):
        '''Test that a boosting stage tree uses the configured depth and leaf size.'''
        stage = GbtParams(max_depth=2, min_leaf=4).tree_params()

        self.assertEqual(stage.max_depth, 2)
        self.assertEqual(stage.min_split, 8)

    def test_forest_sample_fraction(self):
        '''Test that the bag fraction must lie in (0, 1].'''
        with self.assertRaises(ValidationError):
            ForestParams(sample_fraction=0)


class TestPipelineConfigs(unittest.TestCase):
    '''
    Tests cover:
    - Student pruning modes.
    - Cross-validation rule and complexity floor defaults.
    - Split-fraction bounds.
    - Selection config bounds.
    '''

    def test_depth_mode_needs_depth(self):
        '''Test that depth pruning without a depth is rejected.'''
        with self.assertRaises(ValidationError):
            StudentConfig(prune=PruneMode.DEPTH)

        student = StudentConfig(prune='depth', depth=2)
        self.assertIs(student.prune, PruneMode.DEPTH)

    def test_cv_defaults(self):
        '''Test the one-standard-error rule, the 0.01 floor and the floor bounds.'''
        student = StudentConfig()

        self.assertIs(student.prune, PruneMode.CV)
        self.assertIs(student.cv_rule, CvRule.ONE_SE)
        self.assertEqual(student.cp, 0.01)
        self.assertIs(StudentConfig(cv_rule='min').cv_rule, CvRule.MIN)
        for value in (-0.1, 1.0):
            with self.assertRaises(ValidationError):
                StudentConfig(cp=value)

    def test_pi_train_bounds(self):
        '''Test that pi_train must lie strictly inside (0, 1).'''
        for value in (0.0, 1.0, 1.5):
            with self.assertRaises(ValidationError):
                CdtConfig(pi_train=value)

        self.assertEqual(CdtConfig().pi_train, 0.70)

    def test_negative_seed_rejected(self):
        '''Test that seeds must be non-negative.'''
        with self.assertRaises(ValidationError):
            CdtConfig(seed=-1)

    def test_config_round_trip(self):
        '''Test that a dumped config validates back to an equal config.'''
        config = CdtConfig(pi_train=0.6, dr=True, student=StudentConfig(prune='none'))

        self.assertEqual(CdtConfig.model_validate(config.model_dump(mode='json')), config)

    def test_selection_bounds(self):
        '''Test that at least two bootstraps and positive depths are required.'''
        with self.assertRaises(ValidationError):
            SelectionConfig(n_bootstraps=1)

        with self.assertRaises(ValidationError):
            SelectionConfig(depths=(0, 1))

        self.assertEqual(SelectionConfig().depths, (1, 2, 3, 4))


class TestAppSettings(unittest.TestCase):
    '''
    Tests cover:
    - CDT_* environment variables override the defaults.
    '''

    def test_environment_override(self):
        '''Test that CDT_THREADS and CDT_LOG_LEVEL are read from the environment.'''
        with mock.patch.dict(os.environ, {'CDT_THREADS': '4', 'CDT_LOG_LEVEL': 'INFO'}):
            app_settings = AppSettings(_env_file=None)

        self.assertEqual(app_settings.threads, 4)
        self.assertEqual(app_settings.log_level, 'INFO')

    def test_invalid_threads(self):
        '''Test that a zero worker count is rejected.'''
        with mock.patch.dict(os.environ, {'CDT_THREADS': '0'}):
            with self.assertRaises(ValidationError):
                AppSettings(_env_file=None)


if __name__ == '__main__':
    unittest.main()
