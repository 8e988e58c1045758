import json
import logging
from pathlib import Path

from django.conf import settings

from .dataset import load_har, synth_dataset
from .exceptions import ConfigError, FogFedError, LedgerError
from .exporters import (
    file_digest, write_comparison_csv, write_confusion_csv, write_history_csv,
    write_rounds_csv, write_run_meta
)
from .fedcore import LocalUpdate, ScalingPolicy, federated_fuse, weight_digest
from .forms import SimulationConfigForm
from .ledger import load_chain, save_chain, verify_chain
from .neuralnet import deserialize_weights, serialize_weights
from .repositories import RoundResultRepository, SimulationRunRepository
from .simnet import SimConfig, heterogeneity, init_state, run_experiment, train_client

logger = logging.getLogger(__name__)

DEFAULT_CHAIN_NAME = 'chain.fgch'
RUN_META_NAME = 'run-meta.json'


def _form_errors(form):
    return '; '.join(
        f"{name}: {' '.join(errors)}" if name != '__all__' else ' '.join(errors)
        for name, errors in form.errors.items()
    )


class ConfigService:
    """Service for resolving simulation configuration"""

    @staticmethod
    def load_config_file(path):
        """Read a JSON config document; unknown keys are rejected"""
        try:
            document = json.loads(Path(path).read_text(encoding='utf-8'))
        except OSError as e:
            return None, f"cannot read config file {path}: {e}"
        except json.JSONDecodeError as e:
            return None, f"config file {path} is not valid JSON: {e}"

        if not isinstance(document, dict):
            return None, f"config file {path} must hold a JSON object"

        unknown = sorted(set(document) - set(settings.SIMULATION_DEFAULTS))
        if unknown:
            return None, f"unknown config keys: {', '.join(unknown)}"
        return document, None

    @staticmethod
    def resolve(config_path=None, overrides=None):
        """Merge defaults < config file < flags and validate the result"""
        merged = dict(settings.SIMULATION_DEFAULTS)

        if config_path:
            document, error = ConfigService.load_config_file(config_path)
            if error:
                return None, error
            merged.update(document)

        overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
        unknown = sorted(set(overrides) - set(settings.SIMULATION_DEFAULTS))
        if unknown:
            return None, f"unknown config keys: {', '.join(unknown)}"
        merged.update(overrides)

        form = SimulationConfigForm(data=merged)
        if not form.is_valid():
            return None, _form_errors(form)

        resolved = dict(form.cleaned_data)
        # blank paths mean "not set"
        for key in ('data_dir', 'chain_file'):
            resolved[key] = resolved[key] or None
        return resolved, None

    @staticmethod
    def to_sim_config(resolved):
        try:
            config = SimConfig(
                client_count=resolved['clients'],
                rounds=resolved['rounds'],
                epochs=resolved['epochs'],
                batch=resolved['batch'],
                lr=resolved['lr'],
                momentum=resolved['momentum'],
                boost=resolved['boost'],
                seed=resolved['seed'],
                shard_mode=resolved['partition'],
                trusted_ids=None if resolved['trusted_ids'] is None else frozenset(resolved['trusted_ids']),
                intruder_ids=frozenset(resolved['intruder_ids']),
                update_times=None if resolved['update_times'] is None else tuple(resolved['update_times']),
                update_time_mu=resolved['update_time_mu'],
                update_time_sigma=resolved['update_time_sigma'],
                measure_update_times=resolved['measure_update_times'],
                identical_client_seeds=resolved['identical_client_seeds'],
                workers=resolved['workers'],
                conv_filters=tuple(resolved['conv_filters']),
                conv_kernels=tuple(resolved['conv_kernels']),
                pool_size=resolved['pool_size'],
                dense_units=tuple(resolved['dense_units']),
            )
            return config, None
        except ConfigError as e:
            return None, str(e)


class DatasetService:
    """Service for loading the train/test split a run uses"""

    @staticmethod
    def load(resolved):
        data_dir = resolved.get('data_dir')
        if not data_dir:
            splits = synth_dataset(
                resolved['seed'],
                resolved['synthetic_instances'],
                resolved['synthetic_features'],
                resolved['synthetic_classes'],
            )
            return splits, None

        path = Path(data_dir)
        if not path.is_dir():
            return None, f"dataset directory not found: {path}"
        try:
            return load_har(path), None
        except FogFedError as e:
            return None, str(e)


class SimulationService:
    """Service for running experiments and exporting their artifacts"""

    @staticmethod
    def run_simulation(resolved):
        """Run the sweep, write every artifact and record the run"""
        config, error = ConfigService.to_sim_config(resolved)
        if error:
            return None, error

        splits, error = DatasetService.load(resolved)
        if error:
            return None, error
        train, test = splits

        run = SimulationRunRepository.create_run(resolved)
        try:
            result = run_experiment(config, train, test, sweep=resolved['sweep'])
            artifacts = SimulationService.write_artifacts(resolved, result)
        except (FogFedError, ValueError, OSError) as e:
            logger.error("Run %d failed: %s", run.pk, e)
            SimulationRunRepository.mark_failed(run, str(e))
            return None, str(e)

        RoundResultRepository.create_round_results(run, result.reports)
        SimulationRunRepository.mark_completed(run, artifacts)
        return run, None

    @staticmethod
    def write_artifacts(resolved, result):
        """Write CSVs, chains and run-meta; returns {relative path: sha256}"""
        out_dir = Path(resolved['out_dir'])
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [
            write_rounds_csv(out_dir / 'rounds.csv', result.reports),
            write_comparison_csv(out_dir / 'comparison.csv', result.comparison),
        ]

        for run in result.runs:
            n = run.client_count
            for (round_, client_id), history in sorted(run.state.histories.items()):
                written.append(write_history_csv(
                    out_dir / 'history' / f'N{n}_round{round_}_client{client_id}.csv', history
                ))
            written.append(write_confusion_csv(out_dir / f'confusion_N{n}.csv', run.reports[-1].confusion))
            chain_path = out_dir / 'chains' / f'chain_N{n}.fgch'
            save_chain(chain_path, run.state.ledger.snapshot())
            written.append(chain_path)

        chain_file = Path(resolved['chain_file'] or out_dir / DEFAULT_CHAIN_NAME)
        save_chain(chain_file, result.runs[-1].state.ledger.snapshot())
        written.append(chain_file)

        artifacts = {SimulationService._artifact_key(path, out_dir): file_digest(path) for path in written}
        write_run_meta(out_dir / RUN_META_NAME, resolved, artifacts)
        logger.info("Wrote %d artifacts to %s", len(artifacts) + 1, out_dir)
        return artifacts

    @staticmethod
    def _artifact_key(path, out_dir):
        try:
            return Path(path).relative_to(out_dir).as_posix()
        except ValueError:
            return str(path)


class LedgerService:
    """Service for checking chain files"""

    @staticmethod
    def verify_file(path):
        """
        Returns ((chain, status), None) when the file parses, whatever the
        verdict, and (None, message) when it cannot be read or decoded.
        """
        try:
            chain = load_chain(path)
        except LedgerError as e:
            return None, str(e)
        return (chain, verify_chain(chain)), None


class HeterogeneityService:
    """Service for the heterogeneity measure over update times"""

    @staticmethod
    def parse_times(tokens):
        values = []
        for token in tokens:
            for part in str(token).replace(',', ' ').split():
                try:
                    values.append(float(part))
                except ValueError:
                    return None, f"not a number: {part!r}"
        return values, None

    @staticmethod
    def read_times_file(path):
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as e:
            return None, f"cannot read times file {path}: {e}"
        return HeterogeneityService.parse_times(text.split())

    @staticmethod
    def compute(values):
        if len(values) < 2:
            return None, f"need at least 2 update times, got {len(values)}"
        try:
            return heterogeneity(values), None
        except ValueError as e:
            return None, str(e)


class TrainingService:
    """Service for single-client debugging runs"""

    @staticmethod
    def train_single(resolved, client_id):
        """Train one fog client for one round from the seeded initial model"""
        config, error = ConfigService.to_sim_config(resolved)
        if error:
            return None, error
        if client_id not in config.client_ids:
            return None, f"client id must lie in 1..{config.client_count}, got {client_id}"

        splits, error = DatasetService.load(resolved)
        if error:
            return None, error

        try:
            state = init_state(config, *splits)
            result = train_client(state, config, client_id, 1)
        except (FogFedError, ValueError) as e:
            return None, str(e)

        out_dir = Path(resolved['out_dir'])
        out_dir.mkdir(parents=True, exist_ok=True)
        weights_path = out_dir / f'client{client_id}.fgw'
        weights_path.write_bytes(serialize_weights(result.update.weights))
        history_path = write_history_csv(out_dir / f'client{client_id}_history.csv', result.history)
        logger.info("Client %d weights written to %s", client_id, weights_path)
        return {
            'accuracy': result.update.reported_accuracy,
            'weights_path': weights_path,
            'history_path': history_path,
        }, None


class AggregationService:
    """Service for fusing weight files from disk"""

    @staticmethod
    def fuse_files(weight_paths, accuracies, boost, out_path):
        """
        Client ids follow the order of `weight_paths` starting at 1. Returns
        the factors and the fused weight digest.
        """
        if len(weight_paths) != len(accuracies):
            return None, f"{len(weight_paths)} weight files but {len(accuracies)} accuracies"

        try:
            updates = [
                LocalUpdate(client_id, 1, deserialize_weights(Path(path).read_bytes()), accuracy)
                for client_id, (path, accuracy) in enumerate(zip(weight_paths, accuracies), start=1)
            ]
            fused, factors = federated_fuse(updates, ScalingPolicy(boost))
        except OSError as e:
            return None, f"cannot read weight file: {e}"
        except FogFedError as e:
            return None, str(e)

        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_bytes(serialize_weights(fused))
        return {'factors': factors, 'digest': weight_digest(fused).hex(), 'path': out_path}, None
