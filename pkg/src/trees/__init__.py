'''
Tree engine: CART growth and prediction, post-pruning and rendering.
'''

from .cart import (
    RegressionTree,
    SplitCandidate,
    TreeNode,
    apply,
    best_split,
    fit_tree,
    predict,
)
from .pruning import (
    complexity_floor,
    cost_complexity_path,
    cv_prune,
    prune_to_depth,
    subtree_for_alpha,
)
from .render import tree_to_dict, tree_to_text
