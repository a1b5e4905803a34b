'''
Post-pruning: weakest-link cost-complexity paths, the cp floor on split
strength, K-fold selection of the complexity parameter, and pruning to a
fixed depth.

Complexity is measured as SSE divided by the total training weight (n when
unweighted), so alphas from trees grown on different folds are comparable.
'''

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from ..models.config import CvRule, TreeParams
from .cart import RegressionTree, TreeNode, fit_tree, predict

logger = logging.getLogger(__name__)


def _collapse(node: TreeNode, should_collapse: Callable[[TreeNode], bool]) -> TreeNode:
    '''Rebuild a subtree turning every node selected by the predicate into a leaf.'''
    if node.is_leaf:
        return node
    if should_collapse(node):
        return node.as_leaf()
    left = _collapse(node.left, should_collapse)
    right = _collapse(node.right, should_collapse)
    if left is node.left and right is node.right:
        return node
    return TreeNode(mean=node.mean, count=node.count, weight=node.weight, sse=node.sse,
                    depth=node.depth, rule=node.rule, decrease=node.decrease,
                    left=left, right=right)


def _link_strengths(root: TreeNode, total_weight: float) -> dict[int, float]:
    '''g(t) = (R(t) - R(T_t)) / (|leaves(T_t)| - 1) for every internal node, keyed by id.'''

    strengths = {}

    def visit(node: TreeNode) -> tuple[float, int]:
        if node.is_leaf:
            return node.sse, 1
        left_sse, left_leaves = visit(node.left)
        right_sse, right_leaves = visit(node.right)
        leaf_sse, leaves = left_sse + right_sse, left_leaves + right_leaves
        strengths[id(node)] = (node.sse - leaf_sse) / total_weight / (leaves - 1)
        return leaf_sse, leaves

    visit(root)
    return strengths


def cost_complexity_path(tree: RegressionTree) -> list[tuple[float, RegressionTree]]:
    '''
    Weakest-link pruning sequence.

    Returns:
        list of (alpha, subtree) starting at (0, tree) and ending with the
        root-only tree; alphas are nondecreasing and every subtree is a
        pruning of its predecessor.
    '''

    total = tree.root.weight if tree.root.weight > 0 else float(tree.root.count)
    path = [(0.0, tree)]
    current = tree
    alpha = 0.0
    while not current.root.is_leaf:
        strengths = _link_strengths(current.root, total)
        weakest = min(strengths.values())
        cutoff = weakest + 1e-12 * abs(weakest)
        current = current.with_root(
            _collapse(current.root, lambda node: strengths[id(node)] <= cutoff))
        alpha = max(alpha, weakest)
        path.append((alpha, current))
    return path


def subtree_for_alpha(path: Sequence[tuple[float, RegressionTree]], alpha: float) -> RegressionTree:
    '''Smallest subtree on the path whose alpha does not exceed the given one.'''
    chosen = path[0][1]
    for path_alpha, subtree in path:
        if path_alpha <= alpha:
            chosen = subtree
        else:
            break
    return chosen


def complexity_floor(tree: RegressionTree, cp: float) -> float:
    '''Alpha at which every split must remove at least cp times the root SSE.'''
    total = tree.root.weight if tree.root.weight > 0 else float(tree.root.count)
    return cp * tree.root.sse / total


def cv_prune(x,
             targets,
             params: TreeParams = TreeParams(),
             folds: int = 10,
             seed: int = 0,
             *,
             cp: float = 0.01,
             rule: CvRule = CvRule.ONE_SE,
             sample_weight=None,
             feature_names: Optional[Sequence[str]] = None) -> RegressionTree:
    '''
    Grow a tree and prune it at the complexity parameter chosen by K-fold
    cross-validation.

    Candidate alphas are the full-data path at or above the cp floor. Each is
    represented on the fold trees by the geometric mean of it and the next
    alpha (rpart's convention). Fold membership is drawn from the seed.

    rule:
        MIN     lowest mean CV error; ties go to the smaller tree.
        ONE_SE  smallest tree whose CV error is within one standard error
                (of the per-unit held-out losses) of the lowest.
    '''

    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(targets, dtype=float)
    w = np.ones(y.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    n = y.shape[0]

    full = fit_tree(x, y, params, seed, sample_weight=w, feature_names=feature_names)
    path = cost_complexity_path(full)
    if cp > 0:
        floor = complexity_floor(full, cp)
        path = [(floor, subtree_for_alpha(path, floor))] + [(a, t) for a, t in path if a > floor]
    if len(path) == 1:
        return path[0][1]
    if n < folds:
        logger.warning('only %d rows for %d folds; using leave-one-out folds', n, folds)
        folds = n

    alphas = np.array([a for a, _ in path])
    representatives = np.append(np.sqrt(alphas[:-1] * alphas[1:]), alphas[-1])

    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[rng.permutation(n)] = np.arange(n) % folds

    # held-out loss of every unit under every candidate
    losses = np.zeros((len(path), n))
    for fold in range(folds):
        held_out = fold_of == fold
        fold_tree = fit_tree(x[~held_out], y[~held_out], params, seed, sample_weight=w[~held_out])
        fold_path = cost_complexity_path(fold_tree)
        for k, alpha in enumerate(representatives):
            pred = predict(subtree_for_alpha(fold_path, alpha), x[held_out])
            losses[k, held_out] = w[held_out] * (y[held_out] - pred) ** 2

    scaled = losses * (n / w.sum())
    cv_error = scaled.mean(axis=1)
    best = int(np.argmin(cv_error))
    bound = cv_error[best]
    if rule is CvRule.ONE_SE:
        bound += scaled[best].std(ddof=1) / np.sqrt(n)
    chosen = int(np.flatnonzero(cv_error <= bound + 1e-12 * abs(bound))[-1])
    logger.debug('cv_prune (%s): %d candidate alphas, chose alpha=%.6g (%d leaves)',
                 rule.value, len(path), alphas[chosen], path[chosen][1].n_leaves)
    return path[chosen][1]


def prune_to_depth(tree: RegressionTree, d: int) -> RegressionTree:
    '''Collapse every node at depth d into a leaf carrying its pooled mean.'''
    if d < 0:
        raise ValueError(f'depth must be >= 0, got {d}')
    cutoff = tree.root.depth + d
    return tree.with_root(_collapse(tree.root, lambda node: node.depth >= cutoff))
