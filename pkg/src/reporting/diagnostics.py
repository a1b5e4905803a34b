'''
Human-readable diagnostics for a saved report: how well the student tree
reproduces the teacher, the spread of teacher predictions in each node, and
treated / control counts per subgroup on both splits.
'''

import pandas as pd

MIN_ARM_UNITS = 2


def arm_counts_frame(document: dict) -> pd.DataFrame:
    '''One row per subgroup with training and estimation arm counts and the estimate.'''
    nodes = document['diagnostics']['nodes']
    rows = []
    for node, subgroup in zip(nodes, document['subgroups']):
        rows.append({'subgroup': subgroup['label'],
                     'n_train_treated': node['n_train_treated'],
                     'n_train_control': node['n_train_control'],
                     'n_est_treated': subgroup['n_g1'],
                     'n_est_control': subgroup['n_g0'],
                     'tau_hat': subgroup['tau_hat'],
                     'se': subgroup['se'],
                     'undefined': subgroup['undefined']})
    return pd.DataFrame(rows)


def node_quantiles_frame(document: dict) -> pd.DataFrame:
    '''Teacher-prediction quantiles per node on the training split.'''
    columns = {'label': 'subgroup', 'n_train': 'n', 'target_min': 'min', 'target_q25': 'q25',
               'target_median': 'median', 'target_q75': 'q75', 'target_max': 'max'}
    df = pd.DataFrame(document['diagnostics']['nodes'])
    return df[list(columns)].rename(columns=columns)


def arm_warnings(document: dict) -> list[str]:
    '''A line for every subgroup with fewer than two units in some arm on some split.'''
    messages = []
    for row in arm_counts_frame(document).itertuples(index=False):
        counts = {'training treated': row.n_train_treated,
                  'training control': row.n_train_control,
                  'estimation treated': row.n_est_treated,
                  'estimation control': row.n_est_control}
        short = [f'{name}={count}' for name, count in counts.items() if count < MIN_ARM_UNITS]
        if short:
            messages.append(f'subgroup "{row.subgroup}" has fewer than {MIN_ARM_UNITS} units in: '
                            f'{", ".join(short)}')
    return messages


def diagnose_text(document: dict) -> str:
    '''Plain-text diagnostics block for the terminal.'''

    diagnostics = document['diagnostics']
    lines = [f"method: {document['method']}  teacher: {diagnostics['teacher']}  seed: {document['seed']}",
             f"student RMSE vs teacher predictions (training split): {diagnostics['student_rmse']:.6g}",
             f"student tree: depth {diagnostics['student_depth']}, {diagnostics['student_leaves']} leaves",
             f"training units {diagnostics['n_train']} (treated/control "
             f"{diagnostics['train_arm_counts'][0]}/{diagnostics['train_arm_counts'][1]}), "
             f"estimation units {diagnostics['n_est']} (treated/control "
             f"{diagnostics['est_arm_counts'][0]}/{diagnostics['est_arm_counts'][1]})",
             '',
             'teacher predictions per node:',
             node_quantiles_frame(document).to_string(index=False, float_format=lambda v: f'{v:.4g}'),
             '',
             'arm counts per subgroup:',
             arm_counts_frame(document).to_string(index=False, na_rep='-',
                                                  float_format=lambda v: f'{v:.4g}')]

    warnings = arm_warnings(document)
    undefined = [s['label'] for s in document['subgroups'] if s['undefined']]
    lines.append('')
    lines.extend(f'WARNING: {message}' for message in warnings)
    if undefined:
        lines.append(f'undefined estimates: {", ".join(undefined)}')
    else:
        lines.append('undefined estimates: none')
    return '\n'.join(lines) + '\n'
