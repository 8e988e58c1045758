"""
From-scratch 1D convolutional classifier run by every fog client.

Layers are described by resolved LayerSpec shapes; parameters live in a
WeightSet, an ordered tuple of tensors (kernel then bias for each conv1d and
dense layer, in layer order). Training uses float32; gradient checks switch to
float64 copies of the same weights.
"""
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import (
    ArchitectureError, DatasetError, SerializationError, TrainingDivergedError
)

logger = logging.getLogger(__name__)

CONV1D = 'conv1d'
MAXPOOL1D = 'maxpool1d'
DENSE = 'dense'
RELU = 'relu'
SOFTMAX = 'softmax'
PARAMETRIC_KINDS = (CONV1D, DENSE)

DTYPE = np.float32
HIGH_PRECISION = np.float64

WEIGHTS_MAGIC = b'FGFW'
WEIGHTS_VERSION = 1
_HEADER = struct.Struct('<4sBI')
_U32 = struct.Struct('<I')

HISTORY_HEADER = ('epoch', 'train_loss', 'train_acc', 'val_loss', 'val_acc')

GRADIENT_CHECK_MAX_PARAMETERS = 2000
GRADIENT_CHECK_STEP = 1e-5
GRADIENT_CHECK_ABS_THRESHOLD = 1e-7

# Global L2 bound on each mini-batch gradient before the momentum update.
GRADIENT_CLIP_NORM = 5.0


@dataclass(frozen=True)
class LayerSpec:
    """One resolved layer. Shapes are (channels, length) or (features,)."""
    kind: str
    input_shape: tuple
    output_shape: tuple
    filters: int = 0
    kernel: int = 0
    stride: int = 1
    pool: int = 0
    units: int = 0

    @property
    def fan_in(self):
        if self.kind == CONV1D:
            return self.input_shape[0] * self.kernel
        if self.kind == DENSE:
            return math.prod(self.input_shape)
        return 0

    @property
    def parameter_shapes(self):
        if self.kind == CONV1D:
            return [(self.filters, self.input_shape[0], self.kernel), (self.filters,)]
        if self.kind == DENSE:
            return [(math.prod(self.input_shape), self.units), (self.units,)]
        return []


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Ordered layer tensors; layer_index maps each tensor to its LayerSpec position"""
    tensors: tuple
    layer_index: tuple = ()

    @property
    def shapes(self):
        return [t.shape for t in self.tensors]

    @property
    def parameter_count(self):
        return int(sum(t.size for t in self.tensors))

    def astype(self, dtype):
        return WeightSet(tuple(t.astype(dtype, copy=True) for t in self.tensors), self.layer_index)

    def equals(self, other):
        """Same layer mapping and bitwise equality of every tensor"""
        if self.layer_index != other.layer_index or len(self.tensors) != len(other.tensors):
            return False
        return all(
            a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors, other.tensors)
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass(frozen=True)
class TrainHistory:
    records: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.records)

    def to_rows(self):
        return [
            (r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy)
            for r in self.records
        ]


@dataclass(frozen=True, eq=False)
class EvalReport:
    accuracy: float
    confusion: np.ndarray


# Architecture

def build_arch(input_length, classes, conv_filters=(32, 16), conv_kernels=(7, 5),
               pool_size=2, dense_units=(64,), conv_strides=None):
    """
    Resolve a conv1d -> relu -> maxpool1d stack followed by dense -> relu
    blocks and a softmax classifier for a 1-channel input of input_length.
    """
    if classes < 2:
        raise ArchitectureError(f"need at least 2 classes, got {classes}")
    if len(conv_filters) != len(conv_kernels):
        raise ArchitectureError("conv_filters and conv_kernels must have the same length")
    conv_strides = conv_strides or [1] * len(conv_filters)
    if pool_size < 1:
        raise ArchitectureError("pool_size must be positive")

    arch = []
    shape = (1, input_length)
    for position, (filters, kernel, stride) in enumerate(zip(conv_filters, conv_kernels, conv_strides)):
        channels, length = shape
        if filters < 1 or kernel < 1 or stride < 1:
            raise ArchitectureError(f"conv layer {position} needs positive filters, kernel and stride")
        if length < kernel:
            raise ArchitectureError(
                f"conv layer {position}: kernel {kernel} cannot slide over length {length}"
            )
        out = (filters, (length - kernel) // stride + 1)
        arch.append(LayerSpec(CONV1D, shape, out, filters=filters, kernel=kernel, stride=stride))
        arch.append(LayerSpec(RELU, out, out))
        pooled = (filters, out[1] // pool_size)
        if pooled[1] < 1:
            raise ArchitectureError(
                f"pool after conv layer {position}: length {out[1]} too short for pool {pool_size}"
            )
        arch.append(LayerSpec(MAXPOOL1D, out, pooled, pool=pool_size))
        shape = pooled

    for units in dense_units:
        if units < 1:
            raise ArchitectureError("dense layers need at least one unit")
        arch.append(LayerSpec(DENSE, shape, (units,), units=units))
        arch.append(LayerSpec(RELU, (units,), (units,)))
        shape = (units,)

    arch.append(LayerSpec(DENSE, shape, (classes,), units=classes))
    arch.append(LayerSpec(SOFTMAX, (classes,), (classes,)))
    validate_arch(arch)
    return arch


def default_arch(d, c):
    """conv(32,7) relu pool(2) conv(16,5) relu pool(2) dense(64) relu dense(c) softmax"""
    return build_arch(d, c)


def validate_arch(arch):
    if not arch:
        raise ArchitectureError("empty architecture")
    if arch[-1].kind != SOFTMAX:
        raise ArchitectureError("architecture must end with softmax")
    if len(arch[0].input_shape) != 2 or arch[0].input_shape[0] != 1:
        raise ArchitectureError("input must be a 1-channel sequence")
    for i in range(1, len(arch)):
        prev, layer = arch[i - 1], arch[i]
        compatible = prev.output_shape == layer.input_shape or (
            layer.kind == DENSE and math.prod(prev.output_shape) == math.prod(layer.input_shape)
        )
        if not compatible:
            raise ArchitectureError(
                f"layer {i} ({layer.kind}) expects {layer.input_shape}, previous layer gives {prev.output_shape}"
            )
    return arch


def input_length(arch):
    return arch[0].input_shape[1]


def class_count(arch):
    return arch[-1].output_shape[0]


def count_parameters(arch):
    return sum(math.prod(shape) for layer in arch for shape in layer.parameter_shapes)


def _check_weights(arch, weights):
    expected = [shape for layer in arch for shape in layer.parameter_shapes]
    actual = [tuple(t.shape) for t in weights.tensors]
    if expected != actual:
        raise ArchitectureError(f"weight shapes {actual} do not match architecture {expected}")


def layer_index(arch):
    """Position in the arch of every tensor, kernel then bias per parametric layer"""
    return tuple(
        position
        for position, layer in enumerate(arch) if layer.kind in PARAMETRIC_KINDS
        for _ in range(2)
    )


def init_weights(arch, seed):
    """He-uniform kernels in +/- sqrt(6 / fan_in), zero biases"""
    validate_arch(arch)
    rng = np.random.Generator(np.random.PCG64(seed))
    tensors = []
    for layer in arch:
        if layer.kind not in PARAMETRIC_KINDS:
            continue
        kernel_shape, bias_shape = layer.parameter_shapes
        bound = math.sqrt(6.0 / layer.fan_in)
        tensors.append(rng.uniform(-bound, bound, size=kernel_shape).astype(DTYPE))
        tensors.append(np.zeros(bias_shape, dtype=DTYPE))
    return WeightSet(tuple(tensors), layer_index(arch))


# Forward and backward passes

def _conv_forward(x, kernel, bias, stride):
    windows = sliding_window_view(x, kernel.shape[2], axis=2)[:, :, ::stride, :]
    out = np.einsum('nclk,fck->nfl', windows, kernel, optimize=True)
    out += bias[None, :, None]
    return out, windows


def _conv_backward(grad, windows, kernel, stride, length, need_input_grad):
    d_kernel = np.einsum('nfl,nclk->fck', grad, windows, optimize=True)
    d_bias = grad.sum(axis=(0, 2))
    if not need_input_grad:
        return None, d_kernel, d_bias
    n, channels = windows.shape[:2]
    l_out = grad.shape[2]
    d_x = np.zeros((n, channels, length), dtype=grad.dtype)
    for offset in range(kernel.shape[2]):
        stop = offset + stride * (l_out - 1) + 1
        d_x[:, :, offset:stop:stride] += np.einsum(
            'nfl,fc->ncl', grad, kernel[:, :, offset], optimize=True
        )
    return d_x, d_kernel, d_bias


def _pool_forward(x, pool):
    n, channels, length = x.shape
    l_out = length // pool
    grouped = x[:, :, :l_out * pool].reshape(n, channels, l_out, pool)
    # argmax takes the first maximum, so ties route the gradient to the leftmost input
    winners = grouped.argmax(axis=3)
    out = np.take_along_axis(grouped, winners[..., None], axis=3)[..., 0]
    return out, winners


def _pool_backward(grad, winners, input_shape, pool):
    n, channels, length = input_shape
    l_out = grad.shape[2]
    grouped = np.zeros((n, channels, l_out, pool), dtype=grad.dtype)
    np.put_along_axis(grouped, winners[..., None], grad[..., None], axis=3)
    d_x = np.zeros(input_shape, dtype=grad.dtype)
    d_x[:, :, :l_out * pool] = grouped.reshape(n, channels, l_out * pool)
    return d_x


def _logits(arch, tensors, x, caches=None):
    """Run every layer but the final softmax; fill caches for backprop if given"""
    out = x.reshape(x.shape[0], 1, -1)
    t = 0
    for layer in arch[:-1]:
        if layer.kind == CONV1D:
            kernel, bias = tensors[t], tensors[t + 1]
            t += 2
            new, windows = _conv_forward(out, kernel, bias, layer.stride)
            cache = (windows, out.shape[2])
        elif layer.kind == MAXPOOL1D:
            new, winners = _pool_forward(out, layer.pool)
            cache = (winners, out.shape)
        elif layer.kind == DENSE:
            kernel, bias = tensors[t], tensors[t + 1]
            t += 2
            flat = out.reshape(out.shape[0], -1)
            new = flat @ kernel + bias
            cache = (flat, out.shape)
        elif layer.kind == RELU:
            new = np.maximum(out, 0)
            cache = out > 0
        else:
            raise ArchitectureError(f"unexpected {layer.kind} layer before the output")
        if caches is not None:
            caches.append(cache)
        out = new
    return out


def _backward(arch, tensors, caches, d_logits):
    grads = [None] * len(tensors)
    t = len(tensors)
    grad = d_logits
    first_parametric = next(i for i, layer in enumerate(arch) if layer.kind in PARAMETRIC_KINDS)
    for position in range(len(arch) - 2, -1, -1):
        layer = arch[position]
        cache = caches[position]
        need_input_grad = position > first_parametric
        if layer.kind == CONV1D:
            t -= 2
            windows, length = cache
            grad, grads[t], grads[t + 1] = _conv_backward(
                grad, windows, tensors[t], layer.stride, length, need_input_grad
            )
        elif layer.kind == MAXPOOL1D:
            winners, input_shape = cache
            grad = _pool_backward(grad, winners, input_shape, layer.pool)
        elif layer.kind == DENSE:
            t -= 2
            flat, input_shape = cache
            grads[t] = flat.T @ grad
            grads[t + 1] = grad.sum(axis=0)
            grad = (grad @ tensors[t].T).reshape(input_shape) if need_input_grad else None
        elif layer.kind == RELU:
            grad = grad * cache
        if grad is None:
            break
    return grads


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _softmax(logits):
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def _loss_and_grads(arch, tensors, x, y):
    caches = []
    logits = _logits(arch, tensors, x, caches)
    log_probs = _log_softmax(logits)
    n = x.shape[0]
    loss = -log_probs[np.arange(n), y].mean()
    probs = np.exp(log_probs)
    d_logits = probs.copy()
    d_logits[np.arange(n), y] -= 1
    d_logits /= n
    return float(loss), probs, _backward(arch, tensors, caches, d_logits)


def _prepare(arch, weights, features):
    _check_weights(arch, weights)
    dtype = weights.tensors[0].dtype if weights.tensors else DTYPE
    x = np.asarray(features, dtype=dtype)
    if x.ndim != 2 or x.shape[1] != input_length(arch):
        raise ArchitectureError(
            f"input has shape {x.shape[1:]}, architecture expects length {input_length(arch)}"
        )
    return x


def predict_proba(arch, weights, features, chunk=512):
    """Class probabilities for every row of features"""
    x = _prepare(arch, weights, features)
    parts = [
        _softmax(_logits(arch, weights.tensors, x[start:start + chunk]))
        for start in range(0, x.shape[0], chunk)
    ]
    if not parts:
        return np.zeros((0, class_count(arch)), dtype=x.dtype)
    return np.concatenate(parts)


def forward(arch, weights, x):
    """Probability vector for one instance"""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ArchitectureError(f"expected a single instance, got shape {x.shape}")
    return predict_proba(arch, weights, x[None, :])[0]


def compute_loss(arch, weights, features, labels):
    """Mean categorical cross-entropy"""
    x = _prepare(arch, weights, features)
    log_probs = _log_softmax(_logits(arch, weights.tensors, x))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def _metrics(arch, weights, dataset):
    x = _prepare(arch, weights, dataset.features)
    log_probs = _log_softmax(_logits(arch, weights.tensors, x))
    rows = np.arange(len(dataset))
    loss = float(-log_probs[rows, dataset.labels].mean())
    accuracy = float((log_probs.argmax(axis=1) == dataset.labels).mean())
    return loss, accuracy


# Training and evaluation

def train_local(arch, weights, shard, val, epochs, batch, lr, momentum, seed,
                clip_norm=GRADIENT_CLIP_NORM):
    """
    Mini-batch SGD with momentum on categorical cross-entropy. Batch order is
    reshuffled every epoch; the last incomplete batch is kept.

    Inputs are not assumed to be normalised, so each batch gradient is scaled
    down to a global L2 norm of at most clip_norm (None disables clipping).
    """
    if epochs < 1:
        raise ValueError(f"epochs must be at least 1, got {epochs}")
    if not 1 <= batch <= len(shard):
        raise ValueError(f"batch must lie in 1..{len(shard)}, got {batch}")
    if lr <= 0 or not 0 <= momentum < 1:
        raise ValueError(f"invalid optimizer settings lr={lr}, momentum={momentum}")
    if clip_norm is not None and not clip_norm > 0:
        raise ValueError(f"clip_norm must be positive, got {clip_norm}")
    _check_weights(arch, weights)

    rng = np.random.Generator(np.random.PCG64(seed))
    tensors = [t.astype(DTYPE, copy=True) for t in weights.tensors]
    velocity = [np.zeros_like(t) for t in tensors]
    features = np.asarray(shard.features, dtype=DTYPE)
    labels = shard.labels
    lr = DTYPE(lr)
    momentum = DTYPE(momentum)

    records = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(shard))
        loss_sum, correct = 0.0, 0
        for batch_number, start in enumerate(range(0, len(order), batch), start=1):
            rows = order[start:start + batch]
            loss, probs, grads = _loss_and_grads(arch, tensors, features[rows], labels[rows])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_number, f"loss is {loss}")
            if clip_norm is not None:
                norm = _gradient_norm(grads)
                if not math.isfinite(norm):
                    raise TrainingDivergedError(epoch, batch_number, f"gradient norm is {norm}")
                if norm > clip_norm:
                    scale = DTYPE(clip_norm / norm)
                    grads = [g * scale for g in grads]
            for tensor, step, grad in zip(tensors, velocity, grads):
                step *= momentum
                step -= lr * grad
                tensor += step
            if not all(np.isfinite(t).all() for t in tensors):
                raise TrainingDivergedError(epoch, batch_number, "non-finite weights")
            loss_sum += loss * len(rows)
            correct += int((probs.argmax(axis=1) == labels[rows]).sum())

        trained = WeightSet(tuple(tensors), weights.layer_index)
        val_loss, val_accuracy = _metrics(arch, trained, val)
        record = EpochRecord(epoch, loss_sum / len(shard), correct / len(shard), val_loss, val_accuracy)
        logger.debug(
            "epoch %d: loss %.4f acc %.4f val_loss %.4f val_acc %.4f",
            epoch, record.train_loss, record.train_accuracy, val_loss, val_accuracy,
        )
        records.append(record)

    final = WeightSet(tuple(t.copy() for t in tensors), weights.layer_index)
    return final, TrainHistory(tuple(records))


def _gradient_norm(grads):
    return math.sqrt(math.fsum(float(np.square(g, dtype=HIGH_PRECISION).sum()) for g in grads))


def evaluate(arch, weights, test):
    """Argmax predictions (ties to the lowest class) scored into a confusion matrix"""
    if len(test) == 0:
        raise DatasetError("cannot evaluate on an empty test set")
    classes = class_count(arch)
    predictions = predict_proba(arch, weights, test.features).argmax(axis=1)
    confusion = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(confusion, (test.labels, predictions), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return EvalReport(accuracy, confusion)


def gradient_check(arch, weights, features, labels, step=GRADIENT_CHECK_STEP):
    """
    Max relative error between backprop and central finite differences over
    every parameter, in float64. Entries whose magnitudes are both below
    GRADIENT_CHECK_ABS_THRESHOLD are scored by absolute error.
    """
    if weights.parameter_count > GRADIENT_CHECK_MAX_PARAMETERS:
        raise ArchitectureError(
            f"gradient check supports at most {GRADIENT_CHECK_MAX_PARAMETERS} parameters, "
            f"got {weights.parameter_count}"
        )
    precise = weights.astype(HIGH_PRECISION)
    tensors = list(precise.tensors)
    x = _prepare(arch, precise, features)
    y = np.asarray(labels)
    _, _, analytic = _loss_and_grads(arch, tensors, x, y)

    def loss_at():
        log_probs = _log_softmax(_logits(arch, tensors, x))
        return -log_probs[np.arange(len(y)), y].mean()

    worst = 0.0
    for tensor, grad in zip(tensors, analytic):
        flat = tensor.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            plus = loss_at()
            flat[i] = saved - step
            minus = loss_at()
            flat[i] = saved
            numeric = (plus - minus) / (2 * step)
            scale = max(abs(flat_grad[i]), abs(numeric))
            error = abs(flat_grad[i] - numeric)
            if scale >= GRADIENT_CHECK_ABS_THRESHOLD:
                error /= scale
            worst = max(worst, float(error))
    return worst


def history_to_rows(history):
    return [HISTORY_HEADER] + [
        (epoch, f'{loss:.6f}', f'{acc:.6f}', f'{val_loss:.6f}', f'{val_acc:.6f}')
        for epoch, loss, acc, val_loss, val_acc in history.to_rows()
    ]


# Weight transfer format

def serialize_weights(weights):
    """FGFW v1: header, then rank, dims and float32 LE values per tensor"""
    parts = [_HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, len(weights.tensors))]
    for tensor in weights.tensors:
        parts.append(_U32.pack(tensor.ndim))
        parts.extend(_U32.pack(dim) for dim in tensor.shape)
        parts.append(np.ascontiguousarray(tensor, dtype='<f4').tobytes())
    return b''.join(parts)


def deserialize_weights(payload, arch=None):
    """
    Inverse of serialize_weights. FGFW carries no layer mapping; pass the arch
    to check the shapes against it and restore layer_index.
    """
    if len(payload) < _HEADER.size:
        raise SerializationError("payload shorter than the FGFW header")
    magic, version, count = _HEADER.unpack_from(payload, 0)
    if magic != WEIGHTS_MAGIC:
        raise SerializationError(f"bad magic {magic!r}")
    if version != WEIGHTS_VERSION:
        raise SerializationError(f"unsupported version {version}")

    offset = _HEADER.size
    tensors = []
    for position in range(count):
        if offset + _U32.size > len(payload):
            raise SerializationError(f"truncated before tensor {position}")
        (rank,) = _U32.unpack_from(payload, offset)
        offset += _U32.size
        if offset + rank * _U32.size > len(payload):
            raise SerializationError(f"truncated dims of tensor {position}")
        dims = struct.unpack_from(f'<{rank}I', payload, offset)
        offset += rank * _U32.size
        size = math.prod(dims) * 4
        if offset + size > len(payload):
            raise SerializationError(f"truncated values of tensor {position}")
        values = np.frombuffer(payload, dtype='<f4', count=size // 4, offset=offset)
        tensors.append(values.astype(DTYPE).reshape(dims))
        offset += size
    if offset != len(payload):
        raise SerializationError(
            f"{len(payload) - offset} bytes left after {count} tensors (dim/value count mismatch)"
        )
    if arch is None:
        return WeightSet(tuple(tensors))
    weights = WeightSet(tuple(tensors), layer_index(arch))
    _check_weights(arch, weights)
    return weights
