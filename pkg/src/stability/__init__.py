'''
Subgroup stability: the similarity index between partitions and bootstrap
teacher selection.
'''

from .selection import (
    BootstrapRecord,
    SelectionResult,
    bootstrap_ssi,
    feature_stability,
    select_teacher,
    stability_warnings,
)
from .ssi import SsiResult, coassignment, jaccard_ssi, jaccard_ssi_pairwise
