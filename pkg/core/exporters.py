"""
CSV and JSON writers for simulation artifacts. Every writer produces the same
bytes for the same inputs.
"""
import csv
import hashlib
import json
from pathlib import Path

from .neuralnet import history_to_rows

ROUNDS_HEADER = ('round', 'client_count', 'avg_local_acc', 'global_acc', 'rejected', 'chain_len', 'H')
COMPARISON_HEADER = ('client_count', 'avg_local_acc', 'global_acc', 'difference')


def _fmt(value):
    return '' if value is None else f'{value:.6f}'


def _write_rows(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerows(rows)
    return path


def write_rounds_csv(path, reports):
    """One row per round; per-client accuracy and factor columns keyed by client id"""
    client_ids = sorted({cid for report in reports for cid in report.client_ids})
    header = list(ROUNDS_HEADER)
    header += [f'acc_client_{cid}' for cid in client_ids]
    header += [f'factor_client_{cid}' for cid in client_ids]
    rows = [header]
    for report in reports:
        accuracy = dict(zip(report.client_ids, report.local_accuracies))
        factor = dict(zip(report.client_ids, report.factors))
        rows.append(
            [
                report.round, report.client_count,
                _fmt(report.average_local_accuracy), _fmt(report.global_accuracy),
                report.rejected, report.chain_length, _fmt(report.heterogeneity),
            ]
            + [_fmt(accuracy.get(cid)) for cid in client_ids]
            + [_fmt(factor.get(cid)) for cid in client_ids]
        )
    return _write_rows(path, rows)


def write_comparison_csv(path, comparison):
    rows = [COMPARISON_HEADER] + [
        (row.client_count, _fmt(row.average_local_accuracy), _fmt(row.global_accuracy), _fmt(row.difference))
        for row in comparison
    ]
    return _write_rows(path, rows)


def write_history_csv(path, history):
    return _write_rows(path, history_to_rows(history))


def write_confusion_csv(path, confusion):
    return _write_rows(path, [[int(v) for v in row] for row in confusion])


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_run_meta(path, config, artifacts):
    """Resolved config, seed and artifact digests (relative path -> sha256)"""
    meta = {
        'config': config,
        'seed': config['seed'],
        'artifacts': {name: artifacts[name] for name in sorted(artifacts)},
    }
    path = Path(path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path
