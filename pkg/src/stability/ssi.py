'''
Subgroup similarity between two partitions of the same units.

For every subgroup in the union of both partitions, ordered pairs (i, j)
with i in the subgroup and j != i are classified by whether each partition
puts them together. The per-subgroup ratio is agreement-together over all
pairs that either partition puts together; the index is the mean of those
ratios over all subgroups of both partitions.
'''

from dataclasses import dataclass

import numpy as np

from ..models.errors import StructuralError


@dataclass(frozen=True)
class SsiResult:

    '''
    ssi in [0, 1]; ratios lists the first partition's subgroups then the
    second's, each in sorted label order.
    '''

    ssi: float
    ratios: tuple[float, ...]
    n_groups: tuple[int, int]


def _as_membership(membership) -> np.ndarray:
    membership = np.asarray(membership)
    if membership.ndim != 1:
        raise StructuralError(f'membership must be a 1-d vector, got shape {membership.shape}')
    return membership


def coassignment(membership) -> np.ndarray:
    '''n x n boolean matrix, True where two distinct units share a group.'''
    membership = _as_membership(membership)
    together = membership[:, None] == membership[None, :]
    np.fill_diagonal(together, False)
    return together


def _ratio(n11: float, n10: float, n01: float) -> float:
    total = n11 + n10 + n01
    # A singleton subgroup has no pairs and cannot disagree
    return 1.0 if total == 0 else n11 / total


def jaccard_ssi(membership1, membership2) -> SsiResult:
    '''
    Similarity index between two memberships of the same n units.

    Counts come from the G1 x G2 contingency table, so the cost is
    O(n + G1 * G2) rather than O(n^2). Group labels are arbitrary.
    '''

    m1, m2 = _as_membership(membership1), _as_membership(membership2)
    if m1.shape != m2.shape:
        raise StructuralError(f'memberships cover {m1.size} and {m2.size} units')

    _, a = np.unique(m1, return_inverse=True)
    _, b = np.unique(m2, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    rows = table.sum(axis=1, keepdims=True)
    cols = table.sum(axis=0, keepdims=True)

    both = table * (table - 1)
    only_first = table * (rows - table)
    only_second = table * (cols - table)

    ratios = [_ratio(n11, n10, n01) for n11, n10, n01 in
              zip(both.sum(axis=1), only_first.sum(axis=1), only_second.sum(axis=1))]
    ratios += [_ratio(n11, n10, n01) for n11, n10, n01 in
               zip(both.sum(axis=0), only_first.sum(axis=0), only_second.sum(axis=0))]

    return SsiResult(ssi=float(np.mean(ratios)),
                     ratios=tuple(float(r) for r in ratios),
                     n_groups=(table.shape[0], table.shape[1]))


def jaccard_ssi_pairwise(membership1, membership2) -> float:
    '''Direct O(n^2) evaluation from the two coassignment matrices.'''

    m1, m2 = _as_membership(membership1), _as_membership(membership2)
    if m1.shape != m2.shape:
        raise StructuralError(f'memberships cover {m1.size} and {m2.size} units')
    c1, c2 = coassignment(m1), coassignment(m2)

    ratios = []
    for membership in (m1, m2):
        for label in np.unique(membership):
            in_group = membership == label
            n11 = np.sum(c1[in_group] & c2[in_group])
            n10 = np.sum(c1[in_group] & ~c2[in_group])
            n01 = np.sum(~c1[in_group] & c2[in_group])
            ratios.append(_ratio(n11, n10, n01))
    return float(np.mean(ratios))
