'''
Simulated trials with known subgroups, accuracy metrics, the
transformed-outcome and interacted-regression baselines and the replicate
study runner.
'''

from .baseline import transformed_outcome, transformed_outcome_tree
from .dgp import (
    DgpConfig,
    DgpKind,
    GroundTruth,
    OutcomeModel,
    expected_tau,
    gen_dataset,
    normal_cdf,
    pve_to_sigma,
    signal_variance,
)
from .metrics import (
    SubgroupMetrics,
    evaluate_report,
    evaluate_selected,
    evaluate_selection,
    subgroup_ate_rmse,
    subgroup_truths,
    threshold_rmse,
)
from .regression import InteractionFit, interacted_lasso, interacted_ols
from .study import Method, StudyConfig, aggregate, run_replicates, selection_frequency
