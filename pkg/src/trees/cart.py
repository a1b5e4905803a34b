'''
From-scratch CART regression trees.

Growth is greedy on (optionally weighted) squared loss. Candidate thresholds
are midpoints between adjacent distinct sorted values; ties between equally
good splits go to the lower feature index, then the lower threshold, so a
given input always produces the same tree.
'''

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from ..models.config import TreeParams
from ..models.data import Direction, Rule
from ..models.errors import StructuralError

# Relative slack under which two loss decreases count as a tie
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class SplitCandidate:

    '''Best admissible split of a node: parent SSE minus summed child SSE'''

    feature_index: int
    threshold: float
    loss_decrease: float


@dataclass(frozen=True)
class TreeNode:

    '''
    A node of a fitted tree. Every node keeps the mean, row count, weight and
    SSE of its training targets so pruning can collapse it without the data.
    Internal nodes also hold the LE rule that sends rows to the left child.
    '''

    mean: float
    count: int
    weight: float
    sse: float
    depth: int
    rule: Optional[Rule] = None
    decrease: float = 0.0
    left: Optional['TreeNode'] = None
    right: Optional['TreeNode'] = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None

    def as_leaf(self) -> 'TreeNode':
        return replace(self, rule=None, decrease=0.0, left=None, right=None)


@dataclass(frozen=True)
class RegressionTree:

    '''Fitted tree plus the column count and names it was trained on'''

    root: TreeNode
    n_features: int
    feature_names: Optional[tuple[str, ...]] = None

    @property
    def depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves()) - self.root.depth

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def nodes(self) -> list[TreeNode]:
        '''All nodes, pre-order (node, left subtree, right subtree).'''
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def leaves(self) -> list[TreeNode]:
        '''Leaves in depth-first, left-first order.'''
        return [node for node in self.nodes() if node.is_leaf]

    def training_sse(self) -> float:
        return float(sum(leaf.sse for leaf in self.leaves()))

    def split_features(self) -> set[int]:
        return {node.rule.feature_index for node in self.nodes() if not node.is_leaf}

    def with_root(self, root: TreeNode) -> 'RegressionTree':
        return replace(self, root=root)


def _best_threshold(col: np.ndarray,
                    targets: np.ndarray,
                    weights: np.ndarray,
                    params: TreeParams,
                    rng: np.random.Generator) -> Optional[tuple[float, float]]:
    '''(loss decrease, threshold) of the best admissible cut on one column.'''

    order = np.argsort(col, kind='stable')
    xs, ys, ws = col[order], targets[order], weights[order]
    n = xs.shape[0]

    # Cut after sorted position i keeps i + 1 rows on the left
    cuts = np.arange(params.min_leaf - 1, n - params.min_leaf)
    if cuts.size == 0:
        return None
    cuts = cuts[xs[cuts] < xs[cuts + 1]]
    if cuts.size == 0:
        return None
    k = params.max_thresholds_per_feature
    if k is not None and cuts.size > k:
        cuts = np.sort(rng.choice(cuts, size=k, replace=False))

    cum_w = np.cumsum(ws)
    cum_wy = np.cumsum(ws * ys)
    total_w, total_wy = cum_w[-1], cum_wy[-1]
    w_left = cum_w[cuts]
    w_right = total_w - w_left
    ok = (w_left > 0) & (w_right > 0)
    with np.errstate(divide='ignore', invalid='ignore'):
        mean_left = cum_wy[cuts] / w_left
        mean_right = (total_wy - cum_wy[cuts]) / w_right
        decrease = np.where(ok, w_left * w_right / total_w * (mean_left - mean_right) ** 2, 0.0)

    top = decrease.max()
    pick = int(np.flatnonzero(decrease >= top * (1 - _TIE_RTOL))[0])
    lo, hi = xs[cuts[pick]], xs[cuts[pick] + 1]
    threshold = 0.5 * (lo + hi)
    if not threshold < hi:
        # adjacent floats: the midpoint rounded onto the upper value
        threshold = lo
    return float(decrease[pick]), float(threshold)


def best_split(x,
               targets,
               params: TreeParams,
               *,
               sample_weight=None,
               features: Optional[Iterable[int]] = None,
               rng: Optional[np.random.Generator] = None) -> Optional[SplitCandidate]:
    '''
    Exhaustive search for the SSE-optimal split of one node.

    Parameters:
        x : array-like, n x p
            Covariates of the rows in the node.
        targets : array-like, length n
            Regression targets.
        params : TreeParams
            min_leaf, min_split, min_loss_decrease and threshold subsampling.
        sample_weight : array-like, optional
            Non-negative row weights; the loss becomes weighted SSE.
        features : iterable of int, optional
            Restrict the search to these columns (used for forest mtry).
        rng : np.random.Generator, optional
            Only consulted when max_thresholds_per_feature is set.

    Returns:
        SplitCandidate, or None if no admissible split decreases the loss
        (or the best decrease is below min_loss_decrease).
    '''

    x = np.asarray(x, dtype=float)
    y = np.asarray(targets, dtype=float)
    n = y.shape[0]
    if n < params.min_split or n < 2 * params.min_leaf or np.ptp(y) == 0:
        return None

    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    total_w = w.sum()
    if total_w <= 0:
        return None
    centred = y - np.dot(w, y) / total_w
    parent_sse = float(np.dot(w, centred ** 2))
    rng = rng if rng is not None else np.random.default_rng(0)

    columns = range(x.shape[1]) if features is None else sorted(int(j) for j in features)
    per_feature = []
    for j in columns:
        found = _best_threshold(x[:, j], centred, w, params, rng)
        if found is not None:
            per_feature.append((j, *found))
    if not per_feature:
        return None

    top = max(dec for _, dec, _ in per_feature)
    if top <= 1e-12 * parent_sse:
        return None
    feature, decrease, threshold = next(c for c in per_feature if c[1] >= top * (1 - _TIE_RTOL))
    if decrease < params.min_loss_decrease:
        return None
    return SplitCandidate(feature_index=feature, threshold=threshold, loss_decrease=decrease)


def fit_tree(x,
             targets,
             params: TreeParams = TreeParams(),
             seed: int = 0,
             *,
             sample_weight=None,
             max_features: Optional[int] = None,
             feature_names: Optional[Sequence[str]] = None) -> RegressionTree:
    '''
    Grow a tree by recursive greedy splitting.

    The seed drives the per-node feature subsample (max_features) and the
    threshold subsample; with neither set, growth uses no randomness.
    '''

    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(targets, dtype=float)
    if y.shape[0] != x.shape[0]:
        raise StructuralError(f'{x.shape[0]} rows of covariates but {y.shape[0]} targets')
    w = np.ones(y.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    p = x.shape[1]
    rng = np.random.default_rng(seed)

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        yi, wi = y[idx], w[idx]
        weight = float(wi.sum())
        mean = float(np.dot(wi, yi) / weight) if weight > 0 else float(yi.mean())
        sse = float(np.dot(wi, (yi - mean) ** 2))
        leaf = TreeNode(mean=mean, count=int(idx.size), weight=weight, sse=sse, depth=depth)

        if idx.size < params.min_split:
            return leaf
        if params.max_depth is not None and depth >= params.max_depth:
            return leaf
        features = None
        if max_features is not None and max_features < p:
            features = np.sort(rng.choice(p, size=max_features, replace=False))
        cand = best_split(x[idx], yi, params, sample_weight=wi, features=features, rng=rng)
        if cand is None:
            return leaf

        goes_left = x[idx, cand.feature_index] <= cand.threshold
        return replace(leaf,
                       rule=Rule(feature_index=cand.feature_index,
                                 direction=Direction.LE,
                                 threshold=cand.threshold),
                       decrease=cand.loss_decrease,
                       left=grow(idx[goes_left], depth + 1),
                       right=grow(idx[~goes_left], depth + 1))

    root = grow(np.arange(y.shape[0]), 0)
    names = tuple(feature_names) if feature_names is not None else None
    return RegressionTree(root=root, n_features=p, feature_names=names)


def _route(tree: RegressionTree, x) -> list[tuple[TreeNode, np.ndarray]]:
    '''(leaf, row indices) pairs for every leaf reached by some row.'''

    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != tree.n_features:
        raise StructuralError(f'tree was trained on {tree.n_features} columns, got {x.shape[1]}')

    reached = []
    stack = [(tree.root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            reached.append((node, idx))
            continue
        goes_left = x[idx, node.rule.feature_index] <= node.rule.threshold
        stack.append((node.right, idx[~goes_left]))
        stack.append((node.left, idx[goes_left]))
    return reached


def predict(tree: RegressionTree, x_rows) -> np.ndarray:
    '''Leaf mean reached by each row.'''
    routed = _route(tree, x_rows)
    n = sum(idx.size for _, idx in routed)
    out = np.empty(n)
    for leaf, idx in routed:
        out[idx] = leaf.mean
    return out


def apply(tree: RegressionTree, x_rows) -> np.ndarray:
    '''Depth-first, left-first ordinal of the leaf reached by each row.'''
    ordinal = {id(leaf): k for k, leaf in enumerate(tree.leaves())}
    routed = _route(tree, x_rows)
    n = sum(idx.size for _, idx in routed)
    out = np.empty(n, dtype=np.int64)
    for leaf, idx in routed:
        out[idx] = ordinal[id(leaf)]
    return out
