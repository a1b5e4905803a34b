'''
Shared data model: datasets, split rules, subgroups and partitions.

A subgroup is a conjunction of half-interval rules on single covariates and a
partition is a set of subgroups that covers the covariate space exactly once.
Every type here is immutable after construction so it can be handed to
parallel workers without copying or locking.
'''

from __future__ import annotations

from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DataValidationError, PartitionIntegrityError, StructuralError

if TYPE_CHECKING:
    from ..trees.cart import RegressionTree


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class Dataset(BaseModel):

    '''
    Covariates, binary treatment and outcome for n units.

    Invariants: n >= 2, every value finite, z in {0, 1}, unique feature names.
    Arrays are stored read-only.
    '''

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    unit_ids: tuple[str, ...]

    @field_validator('x', 'y', mode='before')
    @classmethod
    def _as_float(cls, value):
        return _frozen_array(value, float)

    @field_validator('z', mode='before')
    @classmethod
    def _as_treatment(cls, value):
        arr = np.asarray(value)
        if arr.size and not np.all(np.isin(arr, (0, 1))):
            bad = np.unique(arr[~np.isin(arr, (0, 1))])[:5]
            raise DataValidationError(f'treatment must be binary 0/1, found values {bad.tolist()}')
        return _frozen_array(arr, np.int8)

    @model_validator(mode='after')
    def _check_shapes(self) -> 'Dataset':
        if self.x.ndim != 2:
            raise DataValidationError(f'covariates must be a 2-d matrix, got {self.x.ndim} dims')
        n, p = self.x.shape
        if n < 2:
            raise DataValidationError(f'need at least 2 units, got {n}')
        if self.z.shape != (n,) or self.y.shape != (n,):
            raise DataValidationError(f'treatment {self.z.shape} and outcome {self.y.shape} '
                                      f'must both have length {n}')
        if len(self.feature_names) != p:
            raise DataValidationError(f'{len(self.feature_names)} feature names for {p} columns')
        if len(set(self.feature_names)) != p:
            raise DataValidationError('feature names must be unique')
        if len(self.unit_ids) != n:
            raise DataValidationError(f'{len(self.unit_ids)} unit ids for {n} units')
        if not np.all(np.isfinite(self.x)) or not np.all(np.isfinite(self.y)):
            raise DataValidationError('covariates and outcomes must be finite')
        return self

    @classmethod
    def from_arrays(cls,
                    x,
                    z,
                    y,
                    feature_names: Optional[Sequence[str]] = None,
                    unit_ids: Optional[Sequence] = None) -> 'Dataset':
        '''
        Build a dataset, generating X1..Xp names and 0..n-1 ids when omitted.
        '''
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n, p = x.shape
        names = tuple(feature_names) if feature_names is not None else default_feature_names(p)
        ids = tuple(str(u) for u in unit_ids) if unit_ids is not None else tuple(str(i) for i in range(n))
        return cls(x=x, z=z, y=y, feature_names=names, unit_ids=ids)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def arm_counts(self) -> tuple[int, int]:
        '''(treated, control) counts.'''
        n1 = int(self.z.sum())
        return n1, self.n - n1

    def subset(self, idx) -> 'Dataset':
        '''Rows selected by an index array, keeping names and ids.'''
        idx = np.asarray(idx)
        return Dataset(x=self.x[idx],
                       z=self.z[idx],
                       y=self.y[idx],
                       feature_names=self.feature_names,
                       unit_ids=tuple(self.unit_ids[i] for i in idx))

    def with_outcome(self, y) -> 'Dataset':
        return Dataset(x=self.x, z=self.z, y=y,
                       feature_names=self.feature_names, unit_ids=self.unit_ids)


def default_feature_names(p: int) -> tuple[str, ...]:
    return tuple(f'X{j + 1}' for j in range(p))


class Direction(str, Enum):

    '''Side of a threshold; a value equal to the threshold always goes LE'''

    LE = '<='
    GT = '>'


class Rule(BaseModel):

    '''Half-interval membership x[feature_index] <= threshold (LE) or > threshold (GT)'''

    model_config = ConfigDict(frozen=True, extra='forbid')

    feature_index: int = Field(ge=0)
    direction: Direction
    threshold: float

    @field_validator('threshold')
    @classmethod
    def _finite(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError('threshold must be finite')
        return value

    def complement(self) -> 'Rule':
        flipped = Direction.GT if self.direction is Direction.LE else Direction.LE
        return Rule(feature_index=self.feature_index, direction=flipped, threshold=self.threshold)

    def mask(self, x: np.ndarray) -> np.ndarray:
        '''Boolean vector of rows of x satisfying the rule.'''
        if self.feature_index >= x.shape[1]:
            raise StructuralError(f'rule uses column {self.feature_index} '
                                  f'but data has {x.shape[1]} columns')
        col = x[:, self.feature_index]
        return col <= self.threshold if self.direction is Direction.LE else col > self.threshold

    def describe(self, feature_names: Optional[Sequence[str]] = None) -> str:
        name = (feature_names[self.feature_index] if feature_names is not None
                else f'X{self.feature_index + 1}')
        return f'{name}{self.direction.value}{self.threshold:.4g}'


def rule_matches(rule: Rule, x_row) -> bool:
    '''True iff a single covariate vector satisfies the rule.'''
    x_row = np.asarray(x_row, dtype=float)
    if rule.feature_index >= x_row.shape[0]:
        raise StructuralError(f'rule uses column {rule.feature_index} '
                              f'but the row has {x_row.shape[0]} entries')
    value = x_row[rule.feature_index]
    if rule.direction is Direction.LE:
        return bool(value <= rule.threshold)
    return bool(value > rule.threshold)


class Subgroup(BaseModel):

    '''Conjunction of rules; an empty rule list selects every unit'''

    model_config = ConfigDict(frozen=True, extra='forbid')

    rules: tuple[Rule, ...] = ()
    label: str = 'all units'

    @classmethod
    def from_rules(cls,
                   rules: Sequence[Rule],
                   feature_names: Optional[Sequence[str]] = None) -> 'Subgroup':
        rules = tuple(rules)
        if not rules:
            return cls()
        return cls(rules=rules, label=' & '.join(r.describe(feature_names) for r in rules))

    def mask(self, x: np.ndarray) -> np.ndarray:
        selected = np.ones(x.shape[0], dtype=bool)
        for rule in self.rules:
            selected &= rule.mask(x)
        return selected

    def features(self) -> set[int]:
        return {rule.feature_index for rule in self.rules}


class Partition(BaseModel):

    '''Mutually exclusive, exhaustive subgroups with a provenance tag'''

    model_config = ConfigDict(frozen=True, extra='forbid')

    subgroups: tuple[Subgroup, ...] = Field(min_length=1)
    source: str = ''

    @property
    def n_groups(self) -> int:
        return len(self.subgroups)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.subgroups]

    def features(self) -> set[int]:
        '''Union of feature indices used by any rule.'''
        used: set[int] = set()
        for subgroup in self.subgroups:
            used |= subgroup.features()
        return used

    def membership_matrix(self, x: np.ndarray) -> np.ndarray:
        '''n x G boolean matrix of subgroup matches.'''
        x = np.asarray(x, dtype=float)
        return np.column_stack([s.mask(x) for s in self.subgroups])


def assign(partition: Partition, data: Union[Dataset, np.ndarray]) -> np.ndarray:
    '''
    Map every unit to the index of the single subgroup it satisfies.

    Parameters:
        partition : Partition
            Subgroups to assign against.
        data : Dataset or np.ndarray
            A dataset, or a raw n x p covariate matrix.

    Returns:
        np.ndarray
            Integer group index in [0, G) per unit.

    Raises:
        PartitionIntegrityError if any unit matches zero or several subgroups.
    '''

    x = data.x if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    matches = partition.membership_matrix(x)
    hits = matches.sum(axis=1)
    bad = np.flatnonzero(hits != 1)
    if bad.size:
        first = int(bad[0])
        raise PartitionIntegrityError(f'{bad.size} unit(s) match {int(hits[first])} subgroups '
                                      f'(first offending row {first}); partition is malformed')
    return matches.argmax(axis=1).astype(np.int64)


def partition_from_tree(tree: 'RegressionTree',
                        feature_names: Optional[Sequence[str]] = None) -> Partition:
    '''
    One subgroup per leaf, rules in root-to-leaf order, leaves depth-first left-first.
    '''

    names = feature_names if feature_names is not None else tree.feature_names
    subgroups = []

    def walk(node, path):
        if node.is_leaf:
            subgroups.append(Subgroup.from_rules(path, names))
            return
        walk(node.left, path + [node.rule])
        walk(node.right, path + [node.rule.complement()])

    walk(tree.root, [])
    return Partition(subgroups=tuple(subgroups),
                     source=f'student-tree depth={tree.depth} leaves={len(subgroups)}')
