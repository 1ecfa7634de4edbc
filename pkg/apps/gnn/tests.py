import statistics
import time

import numpy as np
from django.test import SimpleTestCase, tag

from apps.problems.generators import DiffusionSpec, gen_diffusion
from apps.sparse.csr import CsrMatrix, DimensionMismatch, ZeroDiagonal

from .features import (
    EdgeWeighting,
    NodeFeatureMatrix,
    edge_weights,
    feature_fingerprint,
    graph_inputs,
    init_node_features,
)
from .gcin import GcinParams, NonFiniteActivation, gcin_backward, gcin_forward, init_gcin
from .mlp import MlpParams, init_mlp


def multiscale_matrix(nx=5, ny=2, M=3, seed=1):
    return gen_diffusion(DiffusionSpec(dim=2, nx=nx, ny=ny, bx=nx, by=ny, M=M, seed=seed)).A


def randomize_biases(params, rng, scale=0.5):
    for layer in params.layers:
        for b in layer.biases:
            b[:] = rng.normal(scale=scale, size=b.shape)
    return params


def readout_of(W, X0, params, upstream):
    g, _ = gcin_forward(W, X0, params)
    return float(upstream @ g.values)


def central_differences(f, array, h=1e-4):
    """Numerical gradient of the scalar f() with respect to `array`, perturbed in place."""
    numeric = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        saved = array[idx]
        array[idx] = saved + h
        up = f()
        array[idx] = saved - h
        down = f()
        array[idx] = saved
        numeric[idx] = (up - down) / (2 * h)
    return numeric


class NodeFeatureTests(SimpleTestCase):
    def test_identity_rows(self):
        X = init_node_features(CsrMatrix.identity(3)).data
        np.testing.assert_array_equal(X, np.tile([1.0, 1.0, 0.0, 0.0, 0.0, 0.0], (3, 1)))

    def test_laplacian_interior_row(self):
        A = gen_diffusion(DiffusionSpec(dim=2, nx=5, ny=5, M=0)).A
        X = init_node_features(A)
        self.assertEqual((X.n, X.d), (25, 6))
        center = X.data[12]
        self.assertEqual(center[2], 1.0)
        self.assertEqual(center[3], 0.0)
        self.assertEqual(center[4], 1.0)
        self.assertEqual(center[5], 0.25)

    def test_features_bounded(self):
        X = init_node_features(multiscale_matrix(8, 8, M=5)).data
        self.assertTrue(np.all(X[:, 1:] >= 0.0) and np.all(X[:, 1:] <= 1.0))
        self.assertTrue(np.any(X[:, 3] > 0.0))

    def test_scale_invariance(self):
        A = multiscale_matrix(6, 6, M=4)
        base = init_node_features(A).data
        for c in (2.0**-20, 2.0**30):
            np.testing.assert_array_equal(init_node_features(A.scaled(c)).data, base)
        np.testing.assert_allclose(init_node_features(A.scaled(3.7)).data, base, rtol=1e-12, atol=1e-12)

    def test_zero_diagonal_rejected(self):
        A = CsrMatrix.from_dense([[0.0, 1.0], [1.0, 2.0]])
        with self.assertRaises(ZeroDiagonal):
            init_node_features(A)

    def test_non_finite_features_rejected(self):
        with self.assertRaises(ValueError):
            NodeFeatureMatrix(np.array([[1.0, np.nan]]))


class EdgeWeightTests(SimpleTestCase):
    def test_row_normalization(self):
        A = CsrMatrix.from_dense([[4.0, -1.0, -2.0], [-1.0, 4.0, 0.0], [-2.0, 0.0, 4.0]])
        W = edge_weights(A).W
        _, row0 = W.row(0)
        np.testing.assert_array_equal(row0, [1.0, -0.25, -0.5])
        self.assertTrue(W.same_pattern(A))

    def test_identity(self):
        W = edge_weights(CsrMatrix.identity(4)).W
        np.testing.assert_array_equal(W.to_dense(), np.eye(4))

    def test_missing_diagonal_is_inserted(self):
        A = CsrMatrix.from_coo([0, 0, 1], [0, 1, 0], [2.0, 1.0, 3.0], (2, 2))
        W = edge_weights(A).W
        self.assertEqual(W.nnz, 4)
        self.assertTrue(W.has_full_diagonal())
        np.testing.assert_array_equal(W.to_dense(), [[1.0, 0.5], [1.0, 0.0]])

    def test_bounded_and_scale_invariant(self):
        A = multiscale_matrix(6, 6, M=5)
        W = edge_weights(A).W
        self.assertLessEqual(np.abs(W.values).max(), 1.0)
        np.testing.assert_array_equal(edge_weights(A.scaled(2.0**12)).W.values, W.values)

    def test_zero_row_rejected(self):
        A = CsrMatrix.from_coo([0], [0], [1.0], (2, 2))
        with self.assertRaises(ValueError):
            edge_weights(A)


class GcinForwardTests(SimpleTestCase):
    def test_degenerate_layer_is_mean_of_inputs(self):
        X0 = NodeFeatureMatrix(np.random.default_rng(0).normal(size=(5, 6)))
        W = EdgeWeighting(CsrMatrix.identity(5), np.ones(5))
        params = GcinParams([MlpParams([np.eye(6)], [np.zeros(6)], "identity")])
        g, _ = gcin_forward(W, X0, params)
        np.testing.assert_allclose(g.values, X0.data.mean(axis=0), rtol=1e-15)

    def test_matches_dense_message_passing(self):
        rng = np.random.default_rng(3)
        dense_w = np.array([[1.0, -0.5, 0.0], [-0.25, 1.0, 0.75], [0.0, 0.5, -1.0]])
        X0 = rng.normal(size=(3, 2))
        params = randomize_biases(init_gcin(rng, input_width=2, layers=2, hidden=4, output=3), rng)
        g, _ = gcin_forward(
            EdgeWeighting(CsrMatrix.from_dense(dense_w), np.ones(3)), NodeFeatureMatrix(X0), params
        )

        X, expected = X0, np.zeros(3)
        for layer in params.layers:
            H = np.tanh(dense_w @ X @ layer.weights[0] + layer.biases[0])
            X = H @ layer.weights[1] + layer.biases[1]
            expected += X.mean(axis=0)
        np.testing.assert_allclose(g.values, expected, rtol=1e-12, atol=1e-14)

    def test_permutation_invariance(self):
        A = multiscale_matrix(5, 4, M=4)
        perm = np.random.default_rng(7).permutation(A.n_rows)
        dense = A.to_dense()
        A_perm = CsrMatrix.from_dense(dense[perm][:, perm])
        params = init_gcin(np.random.default_rng(1))
        g, _ = gcin_forward(*graph_inputs(A), params)
        g_perm, _ = gcin_forward(*graph_inputs(A_perm), params)
        np.testing.assert_allclose(g_perm.values, g.values, rtol=0, atol=1e-12)

    def test_scale_invariance(self):
        A = multiscale_matrix(6, 6, M=5)
        params = init_gcin(np.random.default_rng(2))
        g, _ = gcin_forward(*graph_inputs(A), params)
        g_scaled, _ = gcin_forward(*graph_inputs(A.scaled(2.0**-40)), params)
        np.testing.assert_array_equal(g_scaled.values, g.values)

    def test_non_finite_layer_identified(self):
        rng = np.random.default_rng(0)
        first = init_mlp([6, 4, 4], rng, "identity")
        second = MlpParams([np.full((4, 4), 1e300), np.full((4, 4), 1e300)], [np.zeros(4), np.zeros(4)], "identity")
        params = GcinParams([first, second])
        with np.errstate(over="ignore", invalid="ignore"):
            with self.assertRaises(NonFiniteActivation) as ctx:
                gcin_forward(*graph_inputs(multiscale_matrix()), params)
        self.assertEqual(ctx.exception.layer, 2)

    def test_layer_widths_must_conform(self):
        rng = np.random.default_rng(0)
        with self.assertRaises(DimensionMismatch):
            GcinParams([init_mlp([6, 4, 4], rng), init_mlp([5, 4, 4], rng)])
        with self.assertRaises(DimensionMismatch):
            GcinParams([init_mlp([6, 4, 4], rng), init_mlp([4, 4, 3], rng)])
        with self.assertRaises(DimensionMismatch):
            gcin_forward(*graph_inputs(multiscale_matrix()), GcinParams([init_mlp([5, 4, 4], rng)]))


class GcinBackwardTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.W, self.X0 = graph_inputs(multiscale_matrix())
        self.assertEqual(self.X0.n, 10)

    def test_zero_upstream_gives_zero_gradients(self):
        params = init_gcin(self.rng, layers=2, hidden=5, output=4)
        _, cache = gcin_forward(self.W, self.X0, params)
        for grad in gcin_backward(params, cache, np.zeros(4)):
            self.assertFalse(np.any(grad))

    def test_matches_central_differences(self):
        params = randomize_biases(init_gcin(self.rng, layers=3, hidden=5, output=4), self.rng)
        upstream = self.rng.normal(size=4)
        _, cache = gcin_forward(self.W, self.X0, params)
        grads = gcin_backward(params, cache, upstream)

        for array, grad in zip(params.arrays(), grads):
            self.assertEqual(array.shape, grad.shape)
            numeric = central_differences(lambda: readout_of(self.W, self.X0, params, upstream), array)
            np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-7)

    def check_random_trials(self, count):
        for k in range(count):
            rng = np.random.default_rng(k)
            W, X0 = graph_inputs(multiscale_matrix(M=int(rng.integers(1, 6)), seed=k))
            params = init_gcin(rng, layers=int(rng.integers(1, 4)), hidden=5, output=4)
            randomize_biases(params, rng)
            upstream = rng.normal(size=4)
            _, cache = gcin_forward(W, X0, params)
            grads = gcin_backward(params, cache, upstream)
            for i, (array, grad) in enumerate(zip(params.arrays(), grads)):
                numeric = central_differences(lambda: readout_of(W, X0, params, upstream), array)
                error = np.linalg.norm(grad - numeric)
                self.assertLessEqual(
                    error, 1e-4 * max(np.linalg.norm(numeric), 1e-6), f"trial {k}, array {i}"
                )

    def test_seeded_trials_match_central_differences(self):
        self.check_random_trials(3)

    @tag("slow")
    def test_twenty_seeded_trials(self):
        self.check_random_trials(20)

    def test_linear_network_is_affine_in_each_parameter(self):
        params = GcinParams([init_mlp([6, 4, 3], self.rng, "identity"), init_mlp([3, 4, 3], self.rng, "identity")])
        upstream = self.rng.normal(size=3)
        _, cache = gcin_forward(self.W, self.X0, params)
        grads = gcin_backward(params, cache, upstream)
        base = readout_of(self.W, self.X0, params, upstream)
        array, grad = params.arrays()[2], grads[2]
        for t in (0.5, -2.0):
            array[1, 2] += t
            moved = readout_of(self.W, self.X0, params, upstream)
            array[1, 2] -= t
            self.assertAlmostEqual(moved - base, t * grad[1, 2], delta=1e-10 * (1 + abs(base)))


def median_seconds(f, repeats=7):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        f()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


class GcinCostTests(SimpleTestCase):
    @tag("slow")
    def test_inference_time_linear_in_nnz(self):
        params = init_gcin(np.random.default_rng(0))
        small = gen_diffusion(DiffusionSpec(dim=2, nx=128, ny=128, bx=8, by=8, M=4, seed=0)).A
        large = gen_diffusion(DiffusionSpec(dim=2, nx=256, ny=128, bx=8, by=8, M=4, seed=0)).A
        self.assertAlmostEqual(large.nnz / small.nnz, 2.0, delta=0.05)
        small_time, large_time = (
            median_seconds(lambda A=A: gcin_forward(*graph_inputs(A), params)) for A in (small, large)
        )
        self.assertLessEqual(large_time, 3.0 * small_time)


class FingerprintTests(SimpleTestCase):
    def test_stable_digest(self):
        self.assertEqual(feature_fingerprint(), feature_fingerprint())
        self.assertEqual(len(feature_fingerprint()), 32)
