import math
import struct
import unittest
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from core.dataset import TEST, TRAIN, Dataset, load_har, synth_dataset
from core.exceptions import ArchitectureError, DatasetError, SerializationError, TrainingDivergedError
from core.neuralnet import (
    CONV1D, DENSE, MAXPOOL1D, SOFTMAX, WeightSet, build_arch, compute_loss, count_parameters,
    default_arch, deserialize_weights, evaluate, forward, gradient_check, history_to_rows,
    init_weights, predict_proba, serialize_weights, train_local
)

from .fixtures import (
    gradcheck_arch, gradcheck_batch, gradcheck_weights, tiny_arch, tiny_weights, toy_dataset, toy_test
)


class ArchitectureTest(SimpleTestCase):

    def test_default_arch_layers(self):
        arch = default_arch(561, 6)
        self.assertEqual(
            [layer.kind for layer in arch],
            [CONV1D, 'relu', MAXPOOL1D, CONV1D, 'relu', MAXPOOL1D, DENSE, 'relu', DENSE, SOFTMAX],
        )
        self.assertEqual(arch[0].output_shape, (32, 555))
        self.assertEqual(arch[2].output_shape, (32, 277))
        self.assertEqual(arch[3].output_shape, (16, 273))
        self.assertEqual(arch[5].output_shape, (16, 136))
        self.assertEqual(arch[-2].units, 6)

    def test_default_arch_forward_on_zero_vector(self):
        arch = default_arch(561, 6)
        probs = forward(arch, init_weights(arch, 0), np.zeros(561, dtype=np.float32))
        self.assertEqual(probs.shape, (6,))
        self.assertAlmostEqual(float(probs.sum()), 1.0, delta=1e-6)

    def test_too_short_input(self):
        with self.assertRaises(ArchitectureError):
            default_arch(7, 6)

    def test_single_class_rejected(self):
        with self.assertRaises(ArchitectureError):
            default_arch(561, 1)

    def test_parameter_count(self):
        arch = tiny_arch()
        self.assertEqual(count_parameters(arch), 2 + 1 + 2 + 2)
        self.assertEqual(init_weights(arch, 0).parameter_count, 7)


class InitWeightsTest(SimpleTestCase):

    def test_deterministic(self):
        arch = default_arch(40, 6)
        self.assertTrue(init_weights(arch, 42).equals(init_weights(arch, 42)))
        self.assertFalse(init_weights(arch, 42).equals(init_weights(arch, 43)))

    def test_bounds_and_biases(self):
        arch = default_arch(40, 6)
        weights = init_weights(arch, 3)
        parametric = [layer for layer in arch if layer.kind in (CONV1D, DENSE)]
        for position, layer in enumerate(parametric):
            kernel, bias = weights.tensors[2 * position], weights.tensors[2 * position + 1]
            bound = math.sqrt(6.0 / layer.fan_in)
            self.assertLessEqual(float(np.abs(kernel).max()), bound)
            self.assertFalse(bias.any())
            self.assertEqual(kernel.dtype, np.float32)


class ForwardTest(SimpleTestCase):

    def test_hand_computed_tiny_net(self):
        # conv: [1-3, 3-2, 2-0] + 0.5 = [-1.5, 1.5, 2.5]; relu; pool(2) keeps max(0, 1.5)
        # dense: logits = [2 * 1.5 + 0, -1 * 1.5 + 1] = [3, -0.5]
        probs = forward(tiny_arch(), tiny_weights(np.float64), np.array([1.0, 3.0, 2.0, 0.0]))
        expected = np.exp([3.0, -0.5]) / np.exp([3.0, -0.5]).sum()
        np.testing.assert_allclose(probs, expected, rtol=1e-12)

    def test_zero_weights_give_uniform_output(self):
        arch = default_arch(20, 4)
        zeros = WeightSet(tuple(np.zeros_like(t) for t in init_weights(arch, 1).tensors))
        probs = forward(arch, zeros, np.linspace(-3, 3, 20))
        np.testing.assert_allclose(probs, np.full(4, 0.25), atol=1e-7)

    def test_simplex_for_random_inputs(self):
        arch = default_arch(30, 6)
        weights = init_weights(arch, 8)
        probs = predict_proba(arch, weights, np.random.default_rng(2).normal(0, 10, (50, 30)))
        self.assertTrue((probs >= 0).all())
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_chunking_does_not_change_result(self):
        arch = default_arch(30, 6)
        weights = init_weights(arch, 8)
        x = np.random.default_rng(3).standard_normal((37, 30))
        np.testing.assert_allclose(
            predict_proba(arch, weights, x, chunk=5), predict_proba(arch, weights, x, chunk=512),
            rtol=1e-5, atol=1e-7,
        )

    def test_shape_mismatch(self):
        with self.assertRaises(ArchitectureError):
            forward(tiny_arch(), tiny_weights(), np.zeros(5))
        with self.assertRaises(ArchitectureError):
            forward(tiny_arch(), tiny_weights(), np.zeros((2, 4)))


class TrainLocalTest(SimpleTestCase):

    def test_synthetic_accuracy(self):
        train, test = synth_dataset(7, 600, 20, 6)
        arch = default_arch(20, 6)
        weights, history = train_local(arch, init_weights(arch, 7), train, test, 10, 8, 0.01, 0.9, 7)
        self.assertEqual(len(history), 10)
        self.assertGreaterEqual(evaluate(arch, weights, test).accuracy, 0.95)
        for record in history.records:
            self.assertGreaterEqual(record.train_loss, 0.0)
            self.assertTrue(0.0 <= record.val_accuracy <= 1.0)

    def test_synthetic_accuracy_across_training_seeds(self):
        train, test = synth_dataset(7, 600, 20, 6)
        arch = default_arch(20, 6)
        accuracies = []
        for seed in range(7, 15):
            weights, _ = train_local(arch, init_weights(arch, seed), train, test, 10, 8, 0.01, 0.9, seed)
            accuracies.append(evaluate(arch, weights, test).accuracy)
        self.assertGreaterEqual(float(np.median(accuracies)), 0.95, accuracies)
        self.assertGreaterEqual(min(accuracies), 0.9, accuracies)

    def test_clipping_bounds_each_step(self):
        arch = gradcheck_arch()
        weights = gradcheck_weights()
        features, labels = gradcheck_batch()
        sample = Dataset(features.astype(np.float32), labels, TRAIN, 3)
        stepped, _ = train_local(arch, weights, sample, sample, 1, len(sample), 10.0, 0.0, 0, clip_norm=0.01)
        moved = math.sqrt(sum(
            float(np.square(after.astype(np.float64) - before.astype(np.float64)).sum())
            for before, after in zip(weights.tensors, stepped.tensors)
        ))
        self.assertGreater(moved, 0.0)
        self.assertLessEqual(moved, 10.0 * 0.01 * 1.01)

    def test_deterministic(self):
        train, test = toy_dataset(), toy_test()
        arch = tiny_arch()
        start = init_weights(arch, 0)
        first, h1 = train_local(arch, start, train, test, 3, 5, 0.05, 0.9, [4, 1])
        second, h2 = train_local(arch, start, train, test, 3, 5, 0.05, 0.9, [4, 1])
        self.assertTrue(first.equals(second))
        self.assertEqual(h1.to_rows(), h2.to_rows())

    def test_input_weights_untouched(self):
        arch = tiny_arch()
        start = init_weights(arch, 0)
        snapshot = serialize_weights(start)
        train_local(arch, start, toy_dataset(), toy_test(), 2, 4, 0.1, 0.9, 0)
        self.assertEqual(serialize_weights(start), snapshot)

    def test_single_step_decreases_loss(self):
        arch = gradcheck_arch()
        weights = gradcheck_weights()
        features, labels = gradcheck_batch()
        sample = Dataset(features[:1].astype(np.float32), labels[:1], TRAIN, 3)
        before = compute_loss(arch, weights, sample.features, sample.labels)
        stepped, _ = train_local(arch, weights, sample, sample, 1, 1, 1e-4, 0.0, 0)
        self.assertLess(compute_loss(arch, stepped, sample.features, sample.labels), before)

    def test_preconditions(self):
        arch = tiny_arch()
        weights = init_weights(arch, 0)
        train, test = toy_dataset(), toy_test()
        with self.assertRaises(ValueError):
            train_local(arch, weights, train, test, 0, 4, 0.01, 0.9, 0)
        with self.assertRaises(ValueError):
            train_local(arch, weights, train, test, 1, 13, 0.01, 0.9, 0)
        with self.assertRaises(ValueError):
            train_local(arch, weights, train, test, 1, 4, 0.01, 1.0, 0)
        with self.assertRaises(ValueError):
            train_local(arch, weights, train, test, 1, 4, 0.01, 0.9, 0, clip_norm=0.0)

    def test_divergence_names_epoch_and_batch(self):
        arch = build_arch(4, 2, conv_filters=(), conv_kernels=(), dense_units=())
        weights = init_weights(arch, 0)
        train = Dataset(np.full((4, 4), 1e30, dtype=np.float32), np.array([0, 1, 0, 1]), TRAIN, 2)
        with self.assertRaises(TrainingDivergedError) as ctx:
            train_local(arch, weights, train, toy_test(), 2, 2, 10.0, 0.9, 0, clip_norm=None)
        self.assertIn(ctx.exception.epoch, (1, 2))
        self.assertGreaterEqual(ctx.exception.batch, 1)

    def test_history_rows(self):
        arch = tiny_arch()
        _, history = train_local(arch, init_weights(arch, 0), toy_dataset(), toy_test(), 2, 4, 0.05, 0.9, 0)
        rows = history_to_rows(history)
        self.assertEqual(rows[0], ('epoch', 'train_loss', 'train_acc', 'val_loss', 'val_acc'))
        self.assertEqual([row[0] for row in rows[1:]], [1, 2])


class EvaluateTest(SimpleTestCase):

    def test_zero_weights_predict_class_zero(self):
        arch = default_arch(20, 6)
        zeros = WeightSet(tuple(np.zeros_like(t) for t in init_weights(arch, 1).tensors))
        _, test = synth_dataset(4, 300, 20, 6)
        report = evaluate(arch, zeros, test)
        self.assertAlmostEqual(report.accuracy, float((test.labels == 0).mean()))
        self.assertTrue((report.confusion[:, 1:] == 0).all())

    def test_confusion_invariants(self):
        arch = default_arch(20, 6)
        _, test = synth_dataset(4, 300, 20, 6)
        report = evaluate(arch, init_weights(arch, 2), test)
        self.assertEqual(int(report.confusion.sum()), len(test))
        np.testing.assert_array_equal(report.confusion.sum(axis=1), test.label_histogram())
        self.assertAlmostEqual(report.accuracy, np.trace(report.confusion) / len(test))

    def test_perfect_predictor(self):
        # one-hot inputs through an identity dense layer
        arch = build_arch(3, 3, conv_filters=(), conv_kernels=(), dense_units=())
        weights = WeightSet((np.eye(3, dtype=np.float32) * 10, np.zeros(3, dtype=np.float32)))
        labels = np.array([0, 1, 2, 2, 1])
        test = Dataset(np.eye(3, dtype=np.float32)[labels], labels, TEST, 3)
        report = evaluate(arch, weights, test)
        self.assertEqual(report.accuracy, 1.0)
        np.testing.assert_array_equal(report.confusion, np.diag([1, 2, 2]))

    def test_empty_test_set(self):
        empty = Dataset(np.zeros((0, 4), dtype=np.float32), np.zeros(0, dtype=np.int64), TEST, 2)
        with self.assertRaises(DatasetError):
            evaluate(tiny_arch(), tiny_weights(), empty)


class GradientCheckTest(SimpleTestCase):

    def test_backprop_matches_finite_differences(self):
        features, labels = gradcheck_batch()
        error = gradient_check(gradcheck_arch(), gradcheck_weights(), features, labels)
        self.assertLess(error, 1e-4)

    def test_tiny_net(self):
        x = np.array([[1.0, 3.0, 2.0, 0.0], [0.5, -1.0, 2.0, 1.5], [2.0, 0.1, -0.3, 1.0], [0.2, 0.4, 0.9, -2.0]])
        error = gradient_check(tiny_arch(), tiny_weights(), x, np.array([0, 1, 1, 0]))
        self.assertLess(error, 1e-4)

    def test_zero_gradient_uses_absolute_error(self):
        # a dead relu gives exact zero gradients for the conv parameters
        weights = tiny_weights()
        dead = WeightSet((weights.tensors[0], np.array([-100.0], dtype=np.float32)) + weights.tensors[2:])
        x = np.array([[1.0, 3.0, 2.0, 0.0], [0.0, 1.0, 0.0, 1.0]])
        self.assertLess(gradient_check(tiny_arch(), dead, x, np.array([0, 1])), 1e-4)

    def test_repeatable(self):
        features, labels = gradcheck_batch()
        first = gradient_check(gradcheck_arch(), gradcheck_weights(), features, labels)
        second = gradient_check(gradcheck_arch(), gradcheck_weights(), features, labels)
        self.assertEqual(first, second)

    def test_too_many_parameters(self):
        arch = default_arch(561, 6)
        with self.assertRaises(ArchitectureError):
            gradient_check(arch, init_weights(arch, 0), np.zeros((1, 561)), np.array([0]))


class WeightFormatTest(SimpleTestCase):

    def test_round_trip_is_bitwise(self):
        arch = default_arch(40, 6)
        weights = init_weights(arch, 9)
        restored = deserialize_weights(serialize_weights(weights), arch)
        self.assertTrue(weights.equals(restored))
        self.assertEqual(restored.layer_index, weights.layer_index)

    def test_layer_mapping_needs_the_arch(self):
        arch = default_arch(40, 6)
        weights = init_weights(arch, 9)
        self.assertEqual(len(weights.layer_index), len(weights.tensors))
        bare = deserialize_weights(serialize_weights(weights))
        self.assertEqual(bare.layer_index, ())
        self.assertFalse(weights.equals(bare))
        with self.assertRaises(ArchitectureError):
            deserialize_weights(serialize_weights(weights), default_arch(40, 5))

    def test_empty_weight_set(self):
        payload = serialize_weights(WeightSet(()))
        self.assertEqual(payload, b'FGFW\x01\x00\x00\x00\x00')
        self.assertEqual(len(deserialize_weights(payload).tensors), 0)

    def test_layout(self):
        weights = WeightSet((np.array([[1.0, 2.0]], dtype=np.float32),))
        expected = b'FGFW\x01' + struct.pack('<I', 1) + struct.pack('<III', 2, 1, 2) + struct.pack('<2f', 1.0, 2.0)
        self.assertEqual(serialize_weights(weights), expected)

    def test_bad_magic_and_version(self):
        with self.assertRaises(SerializationError):
            deserialize_weights(b'XXXX\x01\x00\x00\x00\x00')
        with self.assertRaises(SerializationError):
            deserialize_weights(b'FGFW\x02\x00\x00\x00\x00')

    def test_truncated_and_trailing(self):
        payload = serialize_weights(tiny_weights())
        for cut in (3, 10, len(payload) - 1):
            with self.assertRaises(SerializationError):
                deserialize_weights(payload[:cut])
        with self.assertRaises(SerializationError):
            deserialize_weights(payload + b'\x00')


@unittest.skipUnless(Path(settings.UCI_HAR_DIR).is_dir(), 'UCI-HAR dataset not available')
class UciHarTrainingTest(SimpleTestCase):

    def test_local_accuracy_band(self):
        train, test = load_har(settings.UCI_HAR_DIR)
        arch = default_arch(train.feature_count, 6)
        weights, _ = train_local(arch, init_weights(arch, 2022), train, test, 10, 8, 0.01, 0.9, [2023, 1])
        accuracy = evaluate(arch, weights, test).accuracy
        self.assertGreaterEqual(accuracy, 0.85)
        self.assertLessEqual(accuracy, 0.95)
