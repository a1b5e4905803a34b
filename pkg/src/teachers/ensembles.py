'''
Tree ensembles built on the in-repo CART engine: bagged forests with
out-of-bag prediction, and least-squares gradient boosting with optional
sample weights.
'''

import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from ..models.config import ForestParams, GbtParams
from ..models.errors import StructuralError
from ..models.seeds import child_seed, rng_for
from ..trees.cart import RegressionTree, fit_tree, predict


@dataclass(frozen=True)
class Forest:

    '''
    Bagged trees plus their out-of-bag predictions on the training rows.

    oob_flags marks rows that landed in every bag; their oob_prediction is
    the all-tree (in-sample) mean.
    '''

    trees: tuple[RegressionTree, ...]
    in_bag: np.ndarray
    oob_prediction: np.ndarray
    oob_flags: np.ndarray

    def predict(self, x) -> np.ndarray:
        return np.mean([predict(tree, x) for tree in self.trees], axis=0)


def _grow_member(x: np.ndarray,
                 y: np.ndarray,
                 params: ForestParams,
                 mtry: int,
                 draws: int,
                 t: int) -> tuple[RegressionTree, np.ndarray]:
    n = y.shape[0]
    rng = rng_for(params.seed, 'bag', t)
    rows = rng.choice(n, size=draws, replace=params.replace)
    tree = fit_tree(x[rows], y[rows], params.tree,
                    seed=child_seed(params.seed, 'split', t),
                    max_features=mtry)
    return tree, np.bincount(rows, minlength=n)


def fit_forest(x, targets, params: ForestParams = ForestParams(), n_jobs: int = 1) -> Forest:
    '''
    Fit a bagged forest with per-split feature subsampling.

    Parameters:
        x : array-like, n x p
        targets : array-like, length n
        params : ForestParams
            n_trees, mtry (default ceil(p / 3)), bag size and tree controls.
        n_jobs : int
            joblib workers; trees are seeded by index so the result does not
            depend on this.

    Returns:
        Forest with oob_prediction / oob_flags for the training rows.
    '''

    x = np.asarray(x, dtype=float)
    y = np.asarray(targets, dtype=float)
    n, p = x.shape
    if n < 2:
        raise StructuralError(f'a forest needs at least 2 rows, got {n}')
    mtry = params.mtry if params.mtry is not None else math.ceil(p / 3)
    if not 1 <= mtry <= p:
        raise StructuralError(f'mtry must lie in [1, {p}], got {mtry}')
    draws = max(1, int(round(params.sample_fraction * n)))

    members = Parallel(n_jobs=n_jobs)(
        delayed(_grow_member)(x, y, params, mtry, draws, t) for t in range(params.n_trees))
    trees = tuple(tree for tree, _ in members)
    in_bag = np.vstack([counts for _, counts in members])

    per_tree = np.vstack([predict(tree, x) for tree in trees])
    out_of_bag = in_bag == 0
    n_oob = out_of_bag.sum(axis=0)
    oob_sum = np.where(out_of_bag, per_tree, 0.0).sum(axis=0)
    oob_prediction = np.where(n_oob > 0, oob_sum / np.maximum(n_oob, 1), per_tree.mean(axis=0))

    return Forest(trees=trees,
                  in_bag=in_bag,
                  oob_prediction=oob_prediction,
                  oob_flags=n_oob == 0)


@dataclass(frozen=True)
class BoostedModel:

    '''Additive model init + learning_rate * sum(trees)'''

    init: float
    learning_rate: float
    trees: tuple[RegressionTree, ...]
    training_loss: tuple[float, ...]

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[0], self.init)
        for tree in self.trees:
            out += self.learning_rate * predict(tree, x)
        return out


def fit_gbt(x, targets, params: GbtParams = GbtParams(), sample_weight=None) -> BoostedModel:
    '''
    Stagewise least-squares boosting on (weighted) residuals with shrinkage.

    training_loss records the weighted mean squared error after each round.
    '''

    x = np.asarray(x, dtype=float)
    y = np.asarray(targets, dtype=float)
    n = y.shape[0]
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise StructuralError('sample weights must be non-negative and not all zero')

    tree_params = params.tree_params()
    init = float(np.dot(w, y) / w.sum())
    fitted = np.full(n, init)
    rng = rng_for(params.seed, 'subsample')
    size = max(1, int(round(params.subsample * n)))

    trees, losses = [], []
    for r in range(params.n_rounds):
        residual = y - fitted
        rows = np.arange(n) if size >= n else np.sort(rng.choice(n, size=size, replace=False))
        tree = fit_tree(x[rows], residual[rows], tree_params,
                        seed=child_seed(params.seed, 'round', r),
                        sample_weight=w[rows])
        fitted = fitted + params.learning_rate * predict(tree, x)
        trees.append(tree)
        losses.append(float(np.dot(w, (y - fitted) ** 2) / w.sum()))

    return BoostedModel(init=init,
                        learning_rate=params.learning_rate,
                        trees=tuple(trees),
                        training_loss=tuple(losses))
