'''
Configuration schemas for the tree engine, teacher models and the
distillation pipeline, plus process-level settings read from the environment.

All schemas are frozen pydantic models that reject unknown fields, so a JSON
config file with a typo fails loudly instead of silently using a default.
'''

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class StrictModel(BaseModel):

    '''Frozen base model that forbids unknown fields'''

    model_config = ConfigDict(frozen=True, extra='forbid')


class TeacherKind(str, Enum):

    '''First-stage CATE models available as teachers'''

    T_LEARNER_FOREST = 't-forest'
    S_LEARNER_GBT = 's-gbt'
    R_LEARNER_GBT = 'r-gbt'
    NOISE_TEACHER = 'noise'     # permuted T-learner output, a negative control


class PruneMode(str, Enum):

    '''How the student tree is pruned after growth'''

    CV = 'cv'
    DEPTH = 'depth'
    NONE = 'none'


class CvRule(str, Enum):

    '''How cross-validation picks the complexity parameter'''

    MIN = 'min'         # lowest mean CV error
    ONE_SE = '1se'      # smallest tree within one standard error of the lowest


class TreeParams(StrictModel):

    '''Pre-pruning controls for CART growth (defaults follow rpart)'''

    min_leaf: int = Field(default=7, ge=1, description='minimum rows per leaf')
    min_split: int = Field(default=20, ge=2, description='minimum rows to attempt a split')
    max_depth: Optional[int] = Field(default=30, ge=0, description='None means unlimited')
    min_loss_decrease: float = Field(default=0.0, ge=0)
    max_thresholds_per_feature: Optional[int] = Field(default=None, ge=1,
                                                      description='None means every midpoint')

    @model_validator(mode='after')
    def _check_split_size(self) -> 'TreeParams':
        if self.min_split < 2 * self.min_leaf:
            raise ValueError(f'min_split ({self.min_split}) must be at least '
                             f'2 * min_leaf ({2 * self.min_leaf})')
        return self


class ForestParams(StrictModel):

    '''Bagged regression forest used by the T-learner'''

    n_trees: int = Field(default=500, ge=1)
    mtry: Optional[int] = Field(default=None, ge=1, description='None means ceil(p / 3)')
    sample_fraction: float = Field(default=1.0, gt=0, le=1)
    replace: bool = True
    tree: TreeParams = TreeParams(min_leaf=5, min_split=10, max_depth=None)
    seed: int = Field(default=0, ge=0)


class GbtParams(StrictModel):

    '''Least-squares gradient boosting used by the S- and R-learners'''

    n_rounds: int = Field(default=200, ge=1)
    learning_rate: float = Field(default=0.1, gt=0)
    max_depth: int = Field(default=3, ge=0)
    subsample: float = Field(default=1.0, gt=0, le=1)
    min_leaf: int = Field(default=5, ge=1)
    seed: int = Field(default=0, ge=0)

    def tree_params(self) -> TreeParams:
        '''Tree controls for a single boosting stage.'''
        return TreeParams(min_leaf=self.min_leaf,
                          min_split=2 * self.min_leaf,
                          max_depth=self.max_depth)


class TeacherSpec(StrictModel):

    '''Which teacher to fit and how'''

    kind: TeacherKind = TeacherKind.T_LEARNER_FOREST
    forest: ForestParams = ForestParams()
    gbt: GbtParams = GbtParams()
    randomized: bool = True
    propensity: Optional[float] = Field(default=0.5, gt=0, lt=1,
                                        description='known e; None means estimate')
    crossfit_repeats: int = Field(default=50, ge=1)

    @model_validator(mode='after')
    def _check_propensity(self) -> 'TeacherSpec':
        if self.randomized and self.propensity is None:
            raise ValueError('a randomized design needs a known propensity')
        return self

    @property
    def name(self) -> str:
        return self.kind.value


class StudentConfig(StrictModel):

    '''Student tree growth and pruning'''

    tree: TreeParams = TreeParams()
    prune: PruneMode = PruneMode.CV
    depth: Optional[int] = Field(default=None, ge=0)
    cv_folds: int = Field(default=10, ge=2)
    cv_rule: CvRule = CvRule.ONE_SE
    cp: float = Field(default=0.01, ge=0, lt=1,
                      description='CV mode only: splits must remove this share of the root SSE')

    @model_validator(mode='after')
    def _check_depth(self) -> 'StudentConfig':
        if self.prune is PruneMode.DEPTH and self.depth is None:
            raise ValueError("prune mode 'depth' needs a depth")
        return self


class CdtConfig(StrictModel):

    '''End-to-end configuration of one distillation run'''

    pi_train: float = Field(default=0.70, gt=0, lt=1)
    teacher: TeacherSpec = TeacherSpec()
    student: StudentConfig = StudentConfig()
    seed: int = Field(default=0, ge=0)
    dr: bool = Field(default=False, description='also report the weighted-adjusted estimator')
    dr_propensity: Optional[float] = Field(default=None, gt=0, lt=1,
                                           description='known e for the DR weights; None means estimate')
    literal_heterogeneity_test: bool = False


class SelectionConfig(StrictModel):

    '''Bootstrap comparison of candidate teachers by subgroup stability'''

    teachers: tuple[TeacherSpec, ...] = Field(default=(TeacherSpec(),), min_length=1)
    depths: tuple[int, ...] = Field(default=(1, 2, 3, 4), min_length=1)
    n_bootstraps: int = Field(default=100, ge=2)
    student: TreeParams = TreeParams()
    seed: int = Field(default=0, ge=0)

    @field_validator('depths')
    @classmethod
    def _positive_depths(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(d < 1 for d in value):
            raise ValueError(f'depths must be >= 1, got {list(value)}')
        return value


class AppSettings(BaseSettings):

    '''Process settings read from CDT_* environment variables or a .env file'''

    threads: int = Field(default=1, ge=1)
    log_level: str = 'WARNING'

    model_config = SettingsConfigDict(env_prefix='CDT_',
                                      env_file='.env',
                                      env_file_encoding='utf-8',
                                      extra='ignore')


# Singleton used by the CLI for defaults
settings = AppSettings()
