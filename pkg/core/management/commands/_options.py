"""Flags shared by the commands that resolve a simulation config"""
import argparse

from core.dataset import SHARD_MODES

# flag dest -> config key
OVERRIDE_KEYS = (
    'clients', 'rounds', 'epochs', 'batch', 'lr', 'boost', 'seed',
    'data_dir', 'out_dir', 'partition', 'sweep', 'workers', 'chain_file',
)


def int_list(value):
    try:
        return [int(part) for part in value.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def float_list(value):
    try:
        return [float(part) for part in value.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def add_config_arguments(parser, sweep=True):
    parser.add_argument('--config', help='JSON config file; flags override its values')
    parser.add_argument('--clients', type=int, help='number of fog clients K')
    parser.add_argument('--rounds', type=int)
    parser.add_argument('--epochs', type=int)
    parser.add_argument('--batch', type=int)
    parser.add_argument('--lr', type=float)
    parser.add_argument('--boost', type=float, help='mass of the best-accuracy client')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--data-dir', dest='data_dir', help='UCI-HAR directory; synthetic data when omitted')
    parser.add_argument('--out-dir', dest='out_dir')
    parser.add_argument('--partition', choices=SHARD_MODES)
    parser.add_argument('--workers', type=int, help='parallel client training jobs')
    if sweep:
        parser.add_argument('--sweep', type=int_list, help='client counts to run, e.g. 1,2,5')
        parser.add_argument('--chain-file', dest='chain_file')


def collect_overrides(options):
    return {key: options.get(key) for key in OVERRIDE_KEYS if options.get(key) is not None}
