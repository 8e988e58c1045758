"""
Round-based fog-IoT topology: K fog clients train locally, the cloud server
gates their submissions through the hyperledger, waits for every update,
fuses them and appends one block per round.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import REPLICATE, ShardPlan, make_shards
from .exceptions import ConfigError, FogFedError, SimulationError
from .fedcore import LocalUpdate, ScalingPolicy, federated_fuse, weight_digest
from .ledger import Authorization, DeviceRegistry, Hyperledger, UpdateRecord
from .neuralnet import build_arch, evaluate, init_weights, train_local

logger = logging.getLogger(__name__)

SERVER_ID = 0
# Fixed offsets from the base seed for each subsystem.
SHARD_SEED_OFFSET = 1
UPDATE_TIME_SEED_OFFSET = 2
INTRUDER_CLAIMED_ACCURACY = 1.0


@dataclass(frozen=True)
class SimConfig:
    client_count: int = 10
    rounds: int = 1
    epochs: int = 10
    batch: int = 8
    lr: float = 0.01
    momentum: float = 0.9
    boost: float = 2.0
    seed: int = 2022
    shard_mode: str = REPLICATE
    trusted_ids: frozenset = None
    intruder_ids: frozenset = frozenset()
    update_times: tuple = None
    update_time_mu: float = 3.0
    update_time_sigma: float = 0.25
    measure_update_times: bool = False
    identical_client_seeds: bool = False
    workers: int = 1
    conv_filters: tuple = (32, 16)
    conv_kernels: tuple = (7, 5)
    pool_size: int = 2
    dense_units: tuple = (64,)

    def __post_init__(self):
        for name in ('client_count', 'rounds', 'epochs', 'batch', 'workers'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        if self.update_time_sigma < 0:
            raise ConfigError(f"update_time_sigma must be non-negative, got {self.update_time_sigma}")
        untrusted = frozenset(self.client_ids) - self.registry_ids
        if untrusted:
            raise ConfigError(f"fog clients {sorted(untrusted)} are missing from trusted_ids")
        overlap = self.registry_ids & frozenset(self.intruder_ids)
        if overlap:
            raise ConfigError(f"ids {sorted(overlap)} are both trusted and intruders")
        if self.update_times is not None:
            if len(self.update_times) != self.client_count:
                raise ConfigError(
                    f"{len(self.update_times)} fixed update times for {self.client_count} clients"
                )
            if any(not t > 0 for t in self.update_times):
                raise ConfigError("fixed update times must be positive")

    @property
    def registry_ids(self):
        if self.trusted_ids is None:
            return frozenset(range(SERVER_ID, self.client_count + 1))
        return frozenset(self.trusted_ids)

    @property
    def client_ids(self):
        return list(range(1, self.client_count + 1))

    def with_clients(self, count):
        """Same experiment with `count` fog clients; fixed update times are truncated"""
        times = None if self.update_times is None else tuple(self.update_times[:count])
        return replace(self, client_count=count, update_times=times)


@dataclass(frozen=True)
class UpdateTimes:
    """Per-worker training plus communication time, seconds"""
    phi: tuple

    def __post_init__(self):
        if any(not (math.isfinite(t) and t > 0) for t in self.phi):
            raise ValueError(f"update times must be positive, got {self.phi}")


@dataclass(frozen=True, eq=False)
class RoundReport:
    round: int
    client_count: int
    client_ids: tuple
    local_accuracies: tuple
    average_local_accuracy: float
    global_accuracy: float
    factors: tuple
    chain_tip_index: int
    chain_length: int
    rejected: int
    heterogeneity: float
    update_times: tuple
    confusion: np.ndarray


@dataclass(frozen=True)
class ComparisonRow:
    client_count: int
    average_local_accuracy: float
    global_accuracy: float

    @property
    def difference(self):
        return self.global_accuracy - self.average_local_accuracy


@dataclass
class PlatformState:
    arch: list
    shards: list
    test: object
    global_weights: object
    ledger: Hyperledger
    round: int = 0
    histories: dict = field(default_factory=dict)
    submissions: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _ClientResult:
    update: LocalUpdate
    history: object
    elapsed: float


@dataclass
class SweepRun:
    client_count: int
    reports: list
    state: PlatformState


@dataclass
class ExperimentResult:
    runs: list

    @property
    def reports(self):
        return [report for run in self.runs for report in run.reports]

    @property
    def comparison(self):
        return [
            ComparisonRow(
                run.client_count,
                run.reports[-1].average_local_accuracy,
                run.reports[-1].global_accuracy,
            )
            for run in self.runs
        ]


def heterogeneity(times):
    """
    H = 1 - (1 / (W - 1)) * sum(phi_min / phi_w) over every worker except one
    fastest worker (the lowest index among ties). 0 when all times are equal.
    Below 1 in exact arithmetic, but once the mean ratio drops under double
    epsilon (a time spread beyond about 1e16) the result rounds to 1.0, so H
    lies in [0, 1].
    """
    phi = (times if isinstance(times, UpdateTimes) else UpdateTimes(tuple(times))).phi
    if len(phi) < 2:
        raise ValueError(f"heterogeneity needs at least 2 workers, got {len(phi)}")
    fastest = min(range(len(phi)), key=lambda i: (phi[i], i))
    ratio_sum = math.fsum(phi[fastest] / t for i, t in enumerate(phi) if i != fastest)
    return 1.0 - ratio_sum / (len(phi) - 1)


def sample_update_times(config, round_):
    """Configured list, or seeded log-normal(mu, sigma) per worker"""
    if config.update_times is not None:
        return UpdateTimes(tuple(float(t) for t in config.update_times))
    if config.update_time_sigma < 0:
        raise ConfigError(f"update_time_sigma must be non-negative, got {config.update_time_sigma}")
    rng = np.random.Generator(np.random.PCG64([config.seed + UPDATE_TIME_SEED_OFFSET, round_]))
    draws = rng.lognormal(config.update_time_mu, config.update_time_sigma, size=config.client_count)
    return UpdateTimes(tuple(float(t) for t in draws))


def _client_seed(config, client_id, round_):
    if config.identical_client_seeds:
        return [config.seed, round_]
    return [config.seed + client_id, round_]


def init_state(config, train, test):
    """Shard the data, register devices, initialise the global model and genesis"""
    arch = build_arch(
        train.feature_count, train.num_classes,
        conv_filters=config.conv_filters, conv_kernels=config.conv_kernels,
        pool_size=config.pool_size, dense_units=config.dense_units,
    )
    shards = make_shards(
        train, ShardPlan(config.shard_mode, config.client_count, config.seed + SHARD_SEED_OFFSET)
    )
    for client_id, shard in zip(config.client_ids, shards):
        if config.batch > len(shard):
            raise ConfigError(f"batch {config.batch} exceeds the {len(shard)} rows of client {client_id}")
    ledger = Hyperledger(DeviceRegistry(config.registry_ids))
    return PlatformState(arch, shards, test, init_weights(arch, config.seed), ledger)


def train_client(state, config, client_id, round_):
    shard = state.shards[client_id - 1]
    started = time.perf_counter()
    weights, history = train_local(
        state.arch, state.global_weights, shard, state.test,
        config.epochs, config.batch, config.lr, config.momentum,
        _client_seed(config, client_id, round_),
    )
    elapsed = time.perf_counter() - started
    accuracy = evaluate(state.arch, weights, state.test).accuracy
    logger.info("Round %d: client %d local accuracy %.4f", round_, client_id, accuracy)
    return _ClientResult(LocalUpdate(client_id, round_, weights, accuracy), history, elapsed)


def _collect(state, config, round_):
    """Barrier: every fog client's job finishes before the server continues"""
    def job(client_id):
        try:
            return train_client(state, config, client_id, round_)
        except (FogFedError, ValueError) as exc:
            raise SimulationError(f"client {client_id} failed in round {round_}: {exc}") from exc

    if config.workers == 1:
        return [job(client_id) for client_id in config.client_ids]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(job, config.client_ids))


def run_round(state, config):
    """One synchronous federated round; returns the advanced state and its report"""
    round_ = state.round + 1
    logger.info("Round %d started with %d fog clients", round_, config.client_count)
    results = _collect(state, config, round_)

    submissions = [r.update for r in results] + [
        LocalUpdate(intruder, round_, state.global_weights, INTRUDER_CLAIMED_ACCURACY)
        for intruder in sorted(config.intruder_ids)
    ]
    rejected_before = len(state.ledger.rejected)
    accepted = [
        update for update in submissions
        if state.ledger.admit(update.client_id) is Authorization.ACCEPT
    ]
    rejected = len(state.ledger.rejected) - rejected_before
    if not accepted:
        raise SimulationError(f"round {round_}: no authorized updates to fuse")

    global_weights, factors = federated_fuse(accepted, ScalingPolicy(config.boost))
    records = [
        UpdateRecord(u.client_id, round_, weight_digest(u.weights), u.reported_accuracy, f)
        for u, f in zip(accepted, factors)
    ]
    chain = state.ledger.commit(records)
    report_eval = evaluate(state.arch, global_weights, state.test)

    accepted_ids = {u.client_id for u in accepted}
    trained = [r for r in results if r.update.client_id in accepted_ids]
    if config.measure_update_times:
        times = UpdateTimes(tuple(max(r.elapsed, 1e-9) for r in trained))
    else:
        times = sample_update_times(config, round_)
    h = heterogeneity(times) if len(times.phi) >= 2 else None

    accuracies = tuple(u.reported_accuracy for u in accepted)
    report = RoundReport(
        round=round_,
        client_count=config.client_count,
        client_ids=tuple(u.client_id for u in accepted),
        local_accuracies=accuracies,
        average_local_accuracy=math.fsum(accuracies) / len(accuracies),
        global_accuracy=report_eval.accuracy,
        factors=tuple(factors),
        chain_tip_index=chain.tip.index,
        chain_length=len(chain),
        rejected=rejected,
        heterogeneity=h,
        update_times=times.phi,
        confusion=report_eval.confusion,
    )
    logger.info(
        "Round %d done: global %.4f vs average local %.4f, %d rejected, chain length %d",
        round_, report.global_accuracy, report.average_local_accuracy, rejected, len(chain),
    )

    histories = dict(state.histories)
    submitted = dict(state.submissions)
    for r in results:
        histories[(round_, r.update.client_id)] = r.history
        submitted[(round_, r.update.client_id)] = r.update.weights
    new_state = replace(
        state, global_weights=global_weights, round=round_,
        histories=histories, submissions=submitted,
    )
    return new_state, report


def run_experiment(config, train, test, sweep=None):
    """
    For each client count N in the sweep, retrain from scratch with the same
    seeds and run the configured rounds.
    """
    sweep = list(sweep or range(1, config.client_count + 1))
    if len(set(sweep)) != len(sweep):
        raise ConfigError(f"sweep entries must be distinct, got {sweep}")
    if any(not 1 <= count <= config.client_count for count in sweep):
        raise ConfigError(f"sweep entries must lie in 1..{config.client_count}, got {sweep}")
    runs = []
    for count in sweep:
        run_config = config.with_clients(count)
        logger.info("Sweep entry N=%d", count)
        state = init_state(run_config, train, test)
        reports = []
        for _ in range(run_config.rounds):
            state, report = run_round(state, run_config)
            reports.append(report)
        runs.append(SweepRun(count, reports, state))
    return ExperimentResult(runs)
