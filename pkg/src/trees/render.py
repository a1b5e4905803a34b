'''
Tree rendering: indented text for humans and a nested JSON-ready dict for
report files.
'''

from typing import Mapping, Optional, Sequence

from .cart import RegressionTree, TreeNode


def _names(tree: RegressionTree, feature_names: Optional[Sequence[str]]):
    return feature_names if feature_names is not None else tree.feature_names


def tree_to_dict(tree: RegressionTree, feature_names: Optional[Sequence[str]] = None) -> dict:
    '''
    Nested node schema: every node has mean and count; internal nodes add
    rule, decrease, left and right.
    '''

    names = _names(tree, feature_names)

    def encode(node: TreeNode) -> dict:
        out = {'mean': node.mean, 'count': node.count}
        if node.is_leaf:
            return out
        rule = node.rule
        out['rule'] = {
            'feature_index': rule.feature_index,
            'feature': (names[rule.feature_index] if names is not None
                        else f'X{rule.feature_index + 1}'),
            'direction': rule.direction.value,
            'threshold': rule.threshold,
        }
        out['decrease'] = node.decrease
        out['left'] = encode(node.left)
        out['right'] = encode(node.right)
        return out

    return encode(tree.root)


def tree_to_text(tree: RegressionTree,
                 feature_names: Optional[Sequence[str]] = None,
                 leaf_notes: Optional[Mapping[int, str]] = None) -> str:
    '''
    Indented rendering, one line per node. leaf_notes maps a leaf ordinal
    (depth-first, left-first) to extra text printed on that leaf's line,
    e.g. the honest subgroup ATE.
    '''

    names = _names(tree, feature_names)
    notes = leaf_notes or {}
    lines = []
    leaf_counter = iter(range(tree.n_leaves))

    def walk(node: TreeNode, label: str, indent: int) -> None:
        pad = '    ' * indent
        stats = f'n={node.count}, mean={node.mean:.4g}'
        if node.is_leaf:
            k = next(leaf_counter)
            note = f'  ->  {notes[k]}' if k in notes else ''
            lines.append(f'{pad}{label} [leaf {k + 1}] ({stats}){note}')
            return
        lines.append(f'{pad}{label} ({stats})')
        walk(node.left, node.rule.describe(names), indent + 1)
        walk(node.right, node.rule.complement().describe(names), indent + 1)

    walk(tree.root, 'root', 0)
    return '\n'.join(lines) + '\n'
