"""Small nets and datasets shared by the test modules"""
import numpy as np

from core.dataset import TEST, TRAIN, Dataset
from core.fedcore import LocalUpdate
from core.neuralnet import WeightSet, build_arch, init_weights


def tiny_arch():
    """d=4, c=2: conv(1 filter, kernel 2) relu pool(2) dense(2) softmax"""
    return build_arch(4, 2, conv_filters=(1,), conv_kernels=(2,), pool_size=2, dense_units=())


def tiny_weights(dtype=np.float32):
    return WeightSet((
        np.array([[[1.0, -1.0]]], dtype=dtype),
        np.array([0.5], dtype=dtype),
        np.array([[2.0, -1.0]], dtype=dtype),
        np.array([0.0, 1.0], dtype=dtype),
    ))


def gradcheck_arch():
    return build_arch(8, 3, conv_filters=(2,), conv_kernels=(3,), pool_size=2, dense_units=(4,))


def gradcheck_batch(seed=11):
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((4, 8))
    labels = np.array([0, 1, 2, 0])
    return features, labels


def gradcheck_weights(seed=5):
    return init_weights(gradcheck_arch(), seed)


def toy_dataset(rows=12, features=4, classes=2, split=TRAIN, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(rows) % classes
    values = rng.standard_normal((rows, features)).astype(np.float32)
    return Dataset(values, labels, split, classes)


def toy_test(rows=6, features=4, classes=2):
    return toy_dataset(rows, features, classes, split=TEST, seed=1)


def scalar_update(client_id, value, accuracy=0.5, round_=1):
    weights = WeightSet((np.array([value], dtype=np.float32),))
    return LocalUpdate(client_id, round_, weights, accuracy)
