import math
import os
import tempfile
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, tag
from rest_framework.exceptions import ValidationError

from apps.gnn.mlp import zero_mlp
from apps.problems.generators import DiffusionSpec, gen_diffusion

from .head import FingerprintMismatch, TrainedModel, init_model, mse_loss, predict_theta
from .persistence import ModelFormatError, load_model, save_model
from .serializers import TrainConfigSerializer
from .training import (
    NonFiniteLoss,
    TrainConfig,
    TrainingSample,
    batch_loss,
    loss_and_gradients,
    loss_curve_frame,
    prepare_samples,
    split_samples,
    train,
)

SMALL_GCIN = {"layers": 2, "hidden": 4, "output": 3}
SMALL_HEAD = {"hidden": 4}


def diffusion(nx=5, ny=2, M=3, seed=1):
    return gen_diffusion(DiffusionSpec(dim=2, nx=nx, ny=ny, bx=nx, by=ny, M=M, seed=seed)).A


class PredictThetaTests(SimpleTestCase):
    def test_zero_head_gives_midpoint(self):
        model = init_model(seed=0)
        model.head = zero_mlp([model.gcin.output_width, 32, 1])
        self.assertEqual(predict_theta(model, diffusion()), 0.5)

    def test_saturated_head_clamps_to_upper_end(self):
        model = init_model(seed=0, gcin=SMALL_GCIN, head=SMALL_HEAD)
        model.head.biases[-1][:] = 1e3
        theta = predict_theta(model, diffusion())
        self.assertLessEqual(theta, 0.99)
        self.assertAlmostEqual(theta, 0.99, places=12)

    def test_range_and_determinism(self):
        for seed in range(4):
            model = init_model(seed=seed)
            A = diffusion(6, 6, M=seed + 1, seed=seed)
            theta = predict_theta(model, A)
            self.assertTrue(0.01 <= theta <= 0.99)
            self.assertEqual(predict_theta(model, A), theta)

    def test_scale_invariance(self):
        model = init_model(seed=3)
        A = diffusion(8, 8, M=5, seed=2)
        theta = predict_theta(model, A)
        for c in (2.0**-27, 2.0**27):
            self.assertEqual(predict_theta(model, A.scaled(c)), theta)
        for c in (1e-8, 1e8):
            self.assertAlmostEqual(predict_theta(model, A.scaled(c)), theta, delta=1e-12)

    def test_fingerprint_checked(self):
        model = init_model(seed=0)
        model.fingerprint = "0" * 32
        with self.assertRaises(FingerprintMismatch):
            predict_theta(model, diffusion())

    def test_head_must_conform(self):
        model = init_model(seed=0, gcin=SMALL_GCIN, head=SMALL_HEAD)
        with self.assertRaises(ValueError):
            TrainedModel(gcin=model.gcin, head=zero_mlp([3, 4, 2]))
        with self.assertRaises(ValueError):
            TrainedModel(gcin=model.gcin, head=zero_mlp([5, 4, 1]))


class MseLossTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(mse_loss([0.3, 0.6], [0.3, 0.6]), 0.0)
        self.assertAlmostEqual(mse_loss([0.5], [0.3]), 0.04, places=15)
        self.assertAlmostEqual(mse_loss([0.1, 0.9], [0.2, 0.7]), 0.025, places=15)

    def test_length_mismatch(self):
        with self.assertRaises(ValueError):
            mse_loss([0.1, 0.2], [0.1])
        with self.assertRaises(ValueError):
            mse_loss([], [])


class TrainConfigTests(SimpleTestCase):
    def test_invariants(self):
        with self.assertRaises(ValueError):
            TrainConfig(batch_size=0)
        with self.assertRaises(ValueError):
            TrainConfig(learning_rate=0.0)
        with self.assertRaises(ValueError):
            TrainConfig(validation_fraction=1.0)

    def test_serializer(self):
        serializer = TrainConfigSerializer(data={"epochs": 10, "batch_size": 4, "gcin": {"hidden": 8}})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        for bad in ({"batch_size": 0}, {"learning_rate": -1.0}, {"gcin": {"width": 3}}):
            with self.assertRaises(ValidationError):
                TrainConfigSerializer(data=bad).is_valid(raise_exception=True)

    def test_validation_split(self):
        samples = [TrainingSample(f"m{i}", None, None, 0.5) for i in range(10)]
        training, validation = split_samples(samples, TrainConfig(validation_fraction=0.2))
        self.assertEqual((len(training), len(validation)), (8, 2))
        self.assertEqual(
            sorted(s.matrix_id for s in training + validation), sorted(s.matrix_id for s in samples)
        )
        training, validation = split_samples(samples[:2], TrainConfig(validation_fraction=0.9))
        self.assertEqual((len(training), len(validation)), (1, 1))


class GradientTests(SimpleTestCase):
    def test_end_to_end_gradient_matches_central_differences(self):
        model = init_model(seed=5, gcin=SMALL_GCIN, head=SMALL_HEAD)
        rng = np.random.default_rng(5)
        for array in model.arrays():
            if array.ndim == 1:
                array[:] = rng.normal(scale=0.3, size=array.shape)
        samples = prepare_samples([("a", diffusion(seed=1), 0.2), ("b", diffusion(M=4, seed=2), 0.7)])
        loss, grads = loss_and_gradients(model, samples)
        self.assertAlmostEqual(loss, batch_loss(model, samples), places=14)

        h = 1e-5
        for array, grad in zip(model.arrays(), grads):
            numeric = np.zeros_like(array)
            for idx in np.ndindex(array.shape):
                saved = array[idx]
                array[idx] = saved + h
                up = batch_loss(model, samples)
                array[idx] = saved - h
                down = batch_loss(model, samples)
                array[idx] = saved
                numeric[idx] = (up - down) / (2 * h)
            np.testing.assert_allclose(grad, numeric, rtol=1e-3, atol=1e-8)

    def check_random_trials(self, count):
        h = 1e-5
        for k in range(count):
            rng = np.random.default_rng(k)
            model = init_model(seed=k, gcin=SMALL_GCIN, head=SMALL_HEAD)
            for array in model.arrays():
                if array.ndim == 1:
                    array[:] = rng.normal(scale=0.3, size=array.shape)
            targets = rng.uniform(0.05, 0.95, size=2)
            samples = prepare_samples(
                [
                    ("a", diffusion(M=int(rng.integers(1, 6)), seed=2 * k + 1), float(targets[0])),
                    ("b", diffusion(M=int(rng.integers(1, 6)), seed=2 * k + 2), float(targets[1])),
                ]
            )
            _, grads = loss_and_gradients(model, samples)
            for i, (array, grad) in enumerate(zip(model.arrays(), grads)):
                numeric = np.zeros_like(array)
                for idx in np.ndindex(array.shape):
                    saved = array[idx]
                    array[idx] = saved + h
                    up = batch_loss(model, samples)
                    array[idx] = saved - h
                    down = batch_loss(model, samples)
                    array[idx] = saved
                    numeric[idx] = (up - down) / (2 * h)
                error = np.linalg.norm(grad - numeric)
                self.assertLessEqual(
                    error, 1e-3 * max(np.linalg.norm(numeric), 1e-6), f"trial {k}, array {i}"
                )

    def test_seeded_trials_match_central_differences(self):
        self.check_random_trials(3)

    @tag("slow")
    def test_twenty_seeded_trials(self):
        self.check_random_trials(20)

    def test_threaded_gradients_are_identical(self):
        model = init_model(seed=1, gcin=SMALL_GCIN, head=SMALL_HEAD)
        samples = prepare_samples([(f"m{s}", diffusion(seed=s), 0.1 * s) for s in range(1, 5)])
        serial = loss_and_gradients(model, samples)
        threaded = loss_and_gradients(model, samples, n_jobs=2)
        self.assertEqual(serial[0], threaded[0])
        for a, b in zip(serial[1], threaded[1]):
            np.testing.assert_array_equal(a, b)


class TrainTests(SimpleTestCase):
    def samples(self, targets):
        return prepare_samples(
            [(f"m{i}", diffusion(6, 4, M=i % 4 + 1, seed=i), t) for i, t in enumerate(targets)]
        )

    def test_constant_target_is_learned(self):
        samples = self.samples([0.5] * 4)
        cfg = TrainConfig(epochs=300, learning_rate=1e-2, validation_fraction=0.0, seed=0)
        model = train(samples, cfg, gcin={"hidden": 8, "output": 8}, head={"hidden": 8})
        self.assertLess(model.metadata["best_loss"], 1e-4)
        self.assertLess(batch_loss(model, samples), 1e-4)

    def test_seeded_runs_are_reproducible(self):
        samples = self.samples([0.2, 0.4, 0.6, 0.8, 0.3])
        cfg = TrainConfig(epochs=5, batch_size=2, seed=4)
        first = train(samples, cfg, gcin=SMALL_GCIN, head=SMALL_HEAD)
        second = train(samples, cfg, gcin=SMALL_GCIN, head=SMALL_HEAD)
        self.assertEqual(first.metadata["loss_curve"], second.metadata["loss_curve"])
        for a, b in zip(first.arrays(), second.arrays()):
            np.testing.assert_array_equal(a, b)
        other = train(samples, TrainConfig(epochs=5, batch_size=2, seed=5), gcin=SMALL_GCIN, head=SMALL_HEAD)
        self.assertNotEqual(other.metadata["loss_curve"], first.metadata["loss_curve"])

    def test_loss_curve_and_checkpoint(self):
        samples = self.samples([0.2, 0.4, 0.6, 0.8, 0.3])
        model = train(samples, TrainConfig(epochs=6, batch_size=2), gcin=SMALL_GCIN, head=SMALL_HEAD)
        frame = loss_curve_frame(model)
        self.assertEqual(list(frame.columns), ["epoch", "train_loss", "val_loss"])
        self.assertEqual(frame["epoch"].tolist(), list(range(7)))
        self.assertEqual(len(model.metadata["validation_ids"]), 1)
        best = model.metadata["best_epoch"]
        self.assertEqual(frame["val_loss"].min(), frame["val_loss"].iloc[best])

    def test_rejects_bad_datasets(self):
        samples = self.samples([0.5, 0.5])
        with self.assertRaises(ValueError):
            train(samples[:1], TrainConfig(epochs=1))
        with self.assertRaises(ValueError):
            train(self.samples([0.5, 1.0]), TrainConfig(epochs=1))

    def test_non_finite_loss_names_epoch_and_batch(self):
        samples = self.samples([0.2, 0.4, 0.6])
        model = init_model(seed=0, gcin=SMALL_GCIN, head=SMALL_HEAD)
        grads = [np.zeros_like(a) for a in model.arrays()]
        with mock.patch("apps.model.training.loss_and_gradients", return_value=(math.nan, grads)):
            with self.assertRaises(NonFiniteLoss) as ctx:
                train(samples, TrainConfig(epochs=2, batch_size=1, validation_fraction=0.0), model=model)
        self.assertEqual((ctx.exception.epoch, ctx.exception.batch), (1, 1))

    def test_diverging_network_surfaces_as_non_finite_loss(self):
        samples = self.samples([0.2, 0.4])
        model = init_model(seed=0, gcin={**SMALL_GCIN, "activation": "identity"}, head=SMALL_HEAD)
        for layer in model.gcin.layers:
            for W in layer.weights:
                W[...] = 1e300
        with np.errstate(over="ignore", invalid="ignore"):
            with self.assertRaises(NonFiniteLoss) as ctx:
                train(samples, TrainConfig(epochs=1), model=model)
        self.assertEqual(ctx.exception.epoch, 0)

    @tag("slow")
    def test_two_regime_dataset_loss_halves(self):
        # single-scale matrices labeled 0.2, strongly multiscale ones 0.8
        items = []
        for i in range(40):
            M = 0 if i % 2 == 0 else 5
            n = 8 + i % 5
            A = gen_diffusion(DiffusionSpec(dim=2, nx=n, ny=n, bx=4, by=4, M=M, seed=i)).A
            items.append((f"m{i:04d}", A, 0.2 if M == 0 else 0.8))
        model = train(prepare_samples(items), TrainConfig(seed=0))
        curve = model.metadata["loss_curve"]
        self.assertLessEqual(curve[-1]["train_loss"], 0.5 * curve[0]["train_loss"])


class PersistenceTests(SimpleTestCase):
    def test_round_trip_is_bitwise(self):
        model = init_model(seed=9)
        model.metadata["loss_curve"] = [{"epoch": 0, "train_loss": 0.1, "val_loss": None}]
        with tempfile.TemporaryDirectory() as tmp:
            path = save_model(model, os.path.join(tmp, "models", "model.json"))
            back = load_model(path)
        self.assertEqual(back.fingerprint, model.fingerprint)
        self.assertEqual(back.metadata, model.metadata)
        self.assertEqual(back.gcin.layers[0].dims, model.gcin.layers[0].dims)
        for a, b in zip(model.arrays(), back.arrays()):
            self.assertEqual(a.shape, b.shape)
            self.assertEqual(a.tobytes(), b.tobytes())

    def test_truncated_file_reports_offset(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_model(init_model(seed=0, gcin=SMALL_GCIN, head=SMALL_HEAD), os.path.join(tmp, "m.json"))
            text = open(path, "rb").read()
            with open(path, "wb") as f:
                f.write(text[: len(text) // 2])
            with self.assertRaises(ModelFormatError) as ctx:
                load_model(path)
        self.assertIsNotNone(ctx.exception.offset)
        self.assertLessEqual(ctx.exception.offset, len(text) // 2)

    def test_fingerprint_mismatch_on_load(self):
        model = init_model(seed=0, gcin=SMALL_GCIN, head=SMALL_HEAD)
        model.fingerprint = "feature-extractor-v1"
        with tempfile.TemporaryDirectory() as tmp:
            path = save_model(model, os.path.join(tmp, "m.json"))
            with self.assertRaises(FingerprintMismatch):
                load_model(path)
            self.assertEqual(load_model(path, for_inference=False).fingerprint, "feature-extractor-v1")
            self.assertEqual(load_model(path, fingerprint="feature-extractor-v1").fingerprint, "feature-extractor-v1")

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_model("/nonexistent/model.json")

    def test_wrong_document(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "m.json")
            with open(path, "w") as f:
                f.write('{"format": "something-else"}')
            with self.assertRaises(ModelFormatError):
                load_model(path)
