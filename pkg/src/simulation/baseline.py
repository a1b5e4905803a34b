'''
No-distillation baseline: a CART tree fit directly to the transformed
(inverse-propensity) outcome, then estimated honestly like a CDT student.
'''

import logging

import numpy as np

from ..models.config import CdtConfig
from ..models.data import Dataset
from ..models.errors import DataValidationError
from ..pipeline.cdt import CdtReport, estimate_report, fit_student, honest_split

logger = logging.getLogger(__name__)


def transformed_outcome(y, z, e) -> np.ndarray:
    '''Y * (Z - e) / (e * (1 - e)); its conditional mean given X is the CATE under a known e.'''
    e = np.asarray(e, dtype=float)
    if np.any((e <= 0) | (e >= 1)):
        raise DataValidationError('propensity must lie strictly between 0 and 1')
    return np.asarray(y, dtype=float) * (np.asarray(z, dtype=float) - e) / (e * (1.0 - e))


def transformed_outcome_tree(dataset: Dataset, e, config: CdtConfig = CdtConfig()) -> CdtReport:
    '''
    Honest transformed-outcome tree.

    Parameters:
        dataset : Dataset
        e : float or array of length n
            Known propensity, scalar or per unit.
        config : CdtConfig
            pi_train, student growth and pruning, seed and inference options;
            the teacher settings are unused.

    Returns:
        CdtReport with method 'tot-baseline'.
    '''

    e = np.broadcast_to(np.asarray(e, dtype=float), (dataset.n,))
    train_idx, est_idx = honest_split(dataset, config.pi_train, config.seed)
    train, est = dataset.subset(train_idx), dataset.subset(est_idx)

    pseudo = transformed_outcome(train.y, train.z, e[train_idx])
    tree, notes = fit_student(train.x, pseudo, config.student, config.seed,
                              feature_names=train.feature_names)
    logger.info('transformed-outcome tree: %d leaves', tree.n_leaves)
    return estimate_report(tree, train, est, pseudo, config, method='tot-baseline', notes=notes)
