"""
Accuracy-boosted federated averaging run by the cloud server.
"""
import hashlib
import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import AggregationError
from .neuralnet import DTYPE, WeightSet, serialize_weights

logger = logging.getLogger(__name__)

FACTOR_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class LocalUpdate:
    """One fog client's round submission"""
    client_id: int
    round: int
    weights: WeightSet
    reported_accuracy: float


@dataclass(frozen=True)
class ScalingPolicy:
    """The best client gets mass `boost`, every other client mass 1"""
    boost: float = 2.0

    def __post_init__(self):
        if not self.boost >= 1.0:
            raise AggregationError(f"boost must be at least 1, got {self.boost}")


def weight_digest(weights):
    """SHA-256 of the canonical FGFW serialization"""
    return hashlib.sha256(serialize_weights(weights)).digest()


def scale_factors(accuracies, policy):
    """
    Normalized scaling factors in input order. Ties on the best accuracy go
    to the lowest index.
    """
    if not accuracies:
        raise AggregationError("no accuracies to scale")
    for position, accuracy in enumerate(accuracies):
        if not 0.0 <= accuracy <= 1.0:
            raise AggregationError(f"accuracy {accuracy} at position {position} outside [0, 1]")

    best = max(range(len(accuracies)), key=lambda i: (accuracies[i], -i))
    total = len(accuracies) - 1 + policy.boost
    return [(policy.boost if i == best else 1.0) / total for i in range(len(accuracies))]


def aggregate(updates, factors):
    """
    Elementwise sum of factor_k * local weights, accumulated in float64 in
    ascending client_id order and stored back as float32.
    """
    if not updates:
        raise AggregationError("no updates to aggregate")
    if len(updates) != len(factors):
        raise AggregationError(f"{len(updates)} updates but {len(factors)} factors")
    if abs(math.fsum(factors) - 1.0) > FACTOR_SUM_TOLERANCE:
        raise AggregationError(f"factors sum to {math.fsum(factors)!r}, expected 1")

    paired = sorted(zip(updates, factors), key=lambda pair: pair[0].client_id)
    reference = paired[0][0]
    shapes = reference.weights.shapes
    for update, _ in paired:
        if update.round != reference.round:
            raise AggregationError(
                f"client {update.client_id} submitted round {update.round}, expected {reference.round}"
            )
        if update.weights.shapes != shapes:
            raise AggregationError(f"client {update.client_id} has tensor shapes {update.weights.shapes}")
        if not all(np.isfinite(t).all() for t in update.weights.tensors):
            raise AggregationError(f"client {update.client_id} submitted NaN/Inf weights")

    fused = []
    for position, shape in enumerate(shapes):
        total = np.zeros(shape, dtype=np.float64)
        for update, factor in paired:
            total += factor * update.weights.tensors[position].astype(np.float64)
        fused.append(total.astype(DTYPE))
    return WeightSet(tuple(fused), reference.weights.layer_index)


def federated_fuse(updates, policy):
    """
    Scale by reported accuracy, then aggregate. Factors are returned in the
    order of `updates`.
    """
    if not updates:
        raise AggregationError("no updates to fuse")
    # ties break on client_id, not on list position
    ordered = sorted(range(len(updates)), key=lambda i: updates[i].client_id)
    ranked = scale_factors([updates[i].reported_accuracy for i in ordered], policy)
    factors = [0.0] * len(updates)
    for rank, i in enumerate(ordered):
        factors[i] = ranked[rank]
    global_weights = aggregate(updates, factors)
    logger.info(
        "Fused %d updates: %s",
        len(updates),
        ', '.join(f'client {u.client_id}={f:.4f}' for u, f in zip(updates, factors)),
    )
    return global_weights, factors
