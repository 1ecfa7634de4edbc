import numpy as np
from django.test import SimpleTestCase, tag

from apps.problems.generators import DiffusionSpec, gen_diffusion
from apps.sparse.csr import CsrMatrix, DimensionMismatch, ZeroDiagonal, spmv

from .coarsening import C_POINT, F_POINT, CfSplitting, pmis_coarsen
from .convergence import tg_convergence_factor_computed, tg_convergence_factor_theoretical
from .galerkin import galerkin
from .hierarchy import AmgParams, SingularCoarseMatrix, setup, vcycle
from .interpolation import direct_interpolation
from .strength import strength_graph


def poisson(n):
    return gen_diffusion(DiffusionSpec(dim=2, nx=n, ny=n, M=0)).A


def multiscale(n, seed=4, M=4):
    return gen_diffusion(DiffusionSpec(dim=2, nx=n, ny=n, bx=4, by=4, M=M, seed=seed)).A


def laplacian_1d(n):
    dense = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    return CsrMatrix.from_dense(dense)


def random_matrix(rng, n_max=60):
    """Sparse matrix with a nonzero diagonal and entries spread over twelve decades."""
    n = int(rng.integers(2, n_max + 1))
    pattern = rng.random((n, n)) < rng.uniform(0.05, 0.5)
    dense = rng.normal(size=(n, n)) * 10.0 ** rng.uniform(-6, 6, size=(n, n)) * pattern
    np.fill_diagonal(dense, rng.uniform(1.0, 10.0, size=n))
    return CsrMatrix.from_dense(dense)


def pattern_subset(small, large):
    return bool(np.isin(small.entry_keys(), large.entry_keys()).all())


def strong_sets(S):
    return [set(S.strong.row(i)[0].tolist()) for i in range(S.n)]


def labels(*marks):
    return CfSplitting(labels=np.array([C_POINT if m == "C" else F_POINT for m in marks], dtype=np.int8))


class StrengthGraphTests(SimpleTestCase):
    def test_threshold_examples(self):
        A = CsrMatrix.from_dense(
            [[8.0, -4.0, -1.0, -2.0], [-4.0, 8.0, 0, 0], [-1.0, 0, 8.0, 0], [-2.0, 0, 0, 8.0]]
        )
        self.assertEqual(strong_sets(strength_graph(A, 0.5))[0], {1, 3})
        self.assertEqual(strong_sets(strength_graph(A, 1.0))[0], {1})
        self.assertEqual(strong_sets(strength_graph(A, 0.01))[0], {1, 2, 3})

    def test_uniform_rows_fully_strong(self):
        A = poisson(4)
        for theta in (0.1, 0.5, 1.0):
            S = strength_graph(A, theta)
            self.assertEqual(S.strong.nnz, A.nnz - A.n_rows)

    def test_transpose_and_diagonal(self):
        S = strength_graph(multiscale(8), 0.3)
        forward = {(i, j) for i, row in enumerate(strong_sets(S)) for j in row}
        backward = {
            (j, i) for i in range(S.n) for j in S.strong_transpose.row(i)[0].tolist()
        }
        self.assertEqual(forward, backward)
        self.assertFalse(any(i == j for i, j in forward))

    def test_monotone_in_theta(self):
        A = multiscale(8)
        thetas = [0.1, 0.25, 0.5, 0.75, 0.99]
        sets = [strong_sets(strength_graph(A, t)) for t in thetas]
        for loose, tight in zip(sets, sets[1:]):
            for a, b in zip(loose, tight):
                self.assertTrue(b <= a)

    def test_scale_invariant(self):
        A = multiscale(8)
        S = strength_graph(A, 0.25)
        for c in (2.0**-10, -4.0, 7.3):
            self.assertTrue(strength_graph(A.scaled(c), 0.25).strong.same_pattern(S.strong))

    def check_random_matrices(self, count):
        for k in range(count):
            rng = np.random.default_rng(k)
            A = random_matrix(rng)
            thetas = np.sort(rng.uniform(0.01, 1.0, size=3))
            graphs = [strength_graph(A, t).strong for t in thetas]
            for loose, tight in zip(graphs, graphs[1:]):
                self.assertTrue(pattern_subset(tight, loose), f"matrix {k}")
            c = float(rng.choice([-1.0, 1.0]) * 2.0 ** rng.integers(-30, 31))
            self.assertTrue(
                strength_graph(A.scaled(c), thetas[0]).strong.same_pattern(graphs[0]), f"matrix {k}"
            )

    def test_random_matrices_monotone_and_scale_invariant(self):
        self.check_random_matrices(50)

    @tag("slow")
    def test_thousand_random_matrices(self):
        self.check_random_matrices(1000)

    def test_theta_out_of_range(self):
        A = poisson(3)
        for theta in (0.0, -0.1, 1.5):
            with self.assertRaises(ValueError):
                strength_graph(A, theta)


class PmisTests(SimpleTestCase):
    def test_no_strong_edges_gives_all_f(self):
        S = strength_graph(CsrMatrix.identity(5), 0.5)
        split = pmis_coarsen(S, seed=0)
        self.assertEqual(split.n_coarse, 0)

    def test_path_with_forced_measures(self):
        S = strength_graph(laplacian_1d(3), 0.25)
        split = pmis_coarsen(S, seed=0, random_values=[0.1, 0.9, 0.2])
        np.testing.assert_array_equal(split.c_points, [1])
        np.testing.assert_array_equal(split.f_points, [0, 2])

    def test_ties_go_to_smaller_index(self):
        S = strength_graph(laplacian_1d(2), 0.25)
        split = pmis_coarsen(S, seed=0, random_values=[0.5, 0.5])
        np.testing.assert_array_equal(split.c_points, [0])

    def assert_independent_and_maximal(self, S, split, label):
        G = S.symmetrized
        is_c = split.is_coarse
        self.assertFalse((is_c[G.row_idx] & is_c[G.col_idx]).any(), label)
        for i in split.f_points:
            nbrs = G.row(i)[0]
            if len(nbrs):
                self.assertTrue(is_c[nbrs].any(), label)

    def test_independent_and_maximal(self):
        for seed in (0, 1, 2):
            S = strength_graph(multiscale(12, seed=seed), 0.25)
            self.assert_independent_and_maximal(S, pmis_coarsen(S, seed=seed), f"seed {seed}")

    def check_random_graphs(self, count):
        for k in range(count):
            rng = np.random.default_rng(k)
            S = strength_graph(random_matrix(rng), float(rng.uniform(0.01, 1.0)))
            self.assert_independent_and_maximal(S, pmis_coarsen(S, seed=k), f"graph {k}")

    def test_random_strength_graphs(self):
        self.check_random_graphs(30)

    @tag("slow")
    def test_five_hundred_random_strength_graphs(self):
        self.check_random_graphs(500)

    def test_deterministic_for_seed(self):
        S = strength_graph(multiscale(10), 0.5)
        a = pmis_coarsen(S, seed=3).labels
        b = pmis_coarsen(S, seed=3).labels
        np.testing.assert_array_equal(a, b)

    def test_coarse_index(self):
        split = labels("F", "C", "F", "C")
        np.testing.assert_array_equal(split.coarse_index, [-1, 0, -1, 1])


class InterpolationTests(SimpleTestCase):
    def test_all_coarse_is_identity(self):
        A = laplacian_1d(4)
        S = strength_graph(A, 0.25)
        P = direct_interpolation(A, S, labels("C", "C", "C", "C"))
        np.testing.assert_array_equal(P.to_dense(), np.eye(4))

    def test_laplacian_weights(self):
        A = laplacian_1d(7)
        S = strength_graph(A, 0.1)
        P = direct_interpolation(A, S, labels("C", "F", "C", "F", "C", "F", "C")).to_dense()
        self.assertEqual(P.shape, (7, 4))
        for f, (left, right) in ((1, (0, 1)), (3, (1, 2)), (5, (2, 3))):
            self.assertAlmostEqual(P[f, left], 0.5)
            self.assertAlmostEqual(P[f, right], 0.5)
            self.assertAlmostEqual(P[f].sum(), 1.0)

    def test_f_point_without_c_neighbour_is_zero_row(self):
        A = laplacian_1d(5)
        S = strength_graph(A, 0.25)
        P = direct_interpolation(A, S, labels("F", "F", "F", "C", "C")).to_dense()
        self.assertFalse(P[1].any())
        self.assertFalse(P[0].any())

    def test_zero_coarse_sum_falls_back_to_equal_weights(self):
        A = CsrMatrix.from_dense([[1.0, 0.0, 0.0], [1.0, 3.0, -1.0], [0.0, 0.0, 1.0]])
        S = strength_graph(A, 0.1)
        P = direct_interpolation(A, S, labels("C", "F", "C")).to_dense()
        np.testing.assert_array_equal(P[1], [0.5, 0.5])

    def test_zero_diagonal_rejected(self):
        S = strength_graph(CsrMatrix.from_dense([[1.0, -1.0], [-1.0, 1.0]]), 0.5)
        A = CsrMatrix.from_dense([[1.0, -1.0], [-1.0, 0.0]])
        with self.assertRaises(ZeroDiagonal):
            direct_interpolation(A, S, labels("C", "F"))
        with self.assertRaises(ZeroDiagonal):
            strength_graph(A, 0.5)


class GalerkinTests(SimpleTestCase):
    def test_identity_prolongation(self):
        A = multiscale(6)
        Ac = galerkin(A, CsrMatrix.identity(A.n_rows))
        self.assertTrue(Ac.same_pattern(A))
        np.testing.assert_array_equal(Ac.values, A.values)

    def test_matches_dense_triple_product(self):
        rng = np.random.default_rng(5)
        for n, m in ((6, 3), (20, 7), (50, 11)):
            A = CsrMatrix.from_dense(rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.3))
            P = CsrMatrix.from_dense(rng.normal(size=(n, m)) * (rng.random((n, m)) < 0.4))
            dense = P.to_dense().T @ A.to_dense() @ P.to_dense()
            np.testing.assert_allclose(galerkin(A, P).to_dense(), dense, rtol=1e-12, atol=1e-12)

    def check_random_products(self, count):
        for k in range(count):
            rng = np.random.default_rng(k)
            n = int(rng.integers(1, 51))
            m = int(rng.integers(1, n + 1))
            A = CsrMatrix.from_dense(rng.normal(size=(n, n)) * (rng.random((n, n)) < rng.uniform(0.1, 0.6)))
            P = CsrMatrix.from_dense(rng.normal(size=(n, m)) * (rng.random((n, m)) < rng.uniform(0.1, 0.6)))
            dense = P.to_dense().T @ A.to_dense() @ P.to_dense()
            error = np.linalg.norm(galerkin(A, P).to_dense() - dense)
            self.assertLessEqual(error, 1e-12 * max(np.linalg.norm(dense), 1.0), f"case {k}")

    def test_random_triple_products(self):
        self.check_random_products(20)

    @tag("slow")
    def test_two_hundred_random_triple_products(self):
        self.check_random_products(200)

    def test_spd_preserved(self):
        A = multiscale(6)
        S = strength_graph(A, 0.25)
        split = pmis_coarsen(S, seed=0)
        Ac = galerkin(A, direct_interpolation(A, S, split)).to_dense()
        np.testing.assert_allclose(Ac, Ac.T, rtol=1e-12, atol=1e-12)
        self.assertGreater(np.linalg.eigvalsh(Ac).min(), 0.0)

    def test_cancellation_keeps_explicit_zero(self):
        A = CsrMatrix.from_dense([[1.0, -1.0], [-1.0, 1.0]])
        P = CsrMatrix.from_dense([[1.0], [1.0]])
        Ac = galerkin(A, P)
        self.assertEqual(Ac.nnz, 1)
        self.assertEqual(Ac.values[0], 0.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            galerkin(CsrMatrix.identity(3), CsrMatrix.identity(2))


class SetupTests(SimpleTestCase):
    def test_small_matrix_is_single_level(self):
        H = setup(poisson(8), 0.25)
        self.assertEqual(H.n_levels, 1)
        x = vcycle(H, np.ones(64), np.zeros(64))
        np.testing.assert_allclose(spmv(H.finest, x), np.ones(64), rtol=1e-12)

    def test_poisson_hierarchy_shrinks(self):
        H = setup(poisson(32), 0.25)
        self.assertGreaterEqual(H.n_levels, 2)
        sizes = [lvl.A.n_rows for lvl in H.levels]
        self.assertTrue(all(a > b for a, b in zip(sizes, sizes[1:])))
        self.assertLessEqual(sizes[-1], 64)
        for lvl in H.levels[:-1]:
            self.assertEqual(lvl.P.n_cols, lvl.splitting.n_coarse)
            np.testing.assert_array_equal(lvl.R.to_dense(), lvl.P.to_dense().T)
        stats = H.stats()
        self.assertEqual(stats["levels"], H.n_levels)
        self.assertGreater(stats["operator_complexity"], 1.0)

    def test_max_levels_respected(self):
        H = setup(poisson(32), 0.25, AmgParams(max_levels=2, coarse_size_limit=1))
        self.assertEqual(H.n_levels, 2)

    def test_no_coarsening_progress_truncates(self):
        H = setup(CsrMatrix.from_dense(np.diag(np.arange(1.0, 101.0))), 0.5)
        self.assertEqual(H.n_levels, 1)

    def test_singular_coarsest(self):
        with self.assertRaises(SingularCoarseMatrix) as ctx:
            setup(CsrMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]]), 0.5)
        self.assertEqual(ctx.exception.level, 0)

    def test_scaled_matrix_gives_same_splittings(self):
        A = multiscale(16)
        H = setup(A, 0.3, AmgParams(coarse_size_limit=16))
        Hc = setup(A.scaled(2.0**5), 0.3, AmgParams(coarse_size_limit=16))
        self.assertEqual(H.n_levels, Hc.n_levels)
        for a, b in zip(H.levels[:-1], Hc.levels[:-1]):
            np.testing.assert_array_equal(a.splitting.labels, b.splitting.labels)
            np.testing.assert_array_equal(a.P.values, b.P.values)


class VcycleTests(SimpleTestCase):
    def setUp(self):
        self.A = poisson(32)
        self.H = setup(self.A, 0.25)

    def test_zero_is_fixed_point(self):
        n = self.A.n_rows
        np.testing.assert_array_equal(vcycle(self.H, np.zeros(n), np.zeros(n)), np.zeros(n))

    def test_error_energy_decreases(self):
        rng = np.random.default_rng(0)
        n = self.A.n_rows
        b = np.zeros(n)
        x = rng.standard_normal(n)
        energy = x @ spmv(self.A, x)
        for _ in range(5):
            x = vcycle(self.H, b, x)
            new_energy = x @ spmv(self.A, x)
            self.assertLess(new_energy, energy)
            energy = new_energy

    def test_linear_in_b_and_x(self):
        rng = np.random.default_rng(1)
        n = self.A.n_rows
        b, x = rng.standard_normal(n), rng.standard_normal(n)
        alpha = 2.0**3
        np.testing.assert_allclose(
            vcycle(self.H, alpha * b, alpha * x), alpha * vcycle(self.H, b, x), rtol=1e-12, atol=1e-12
        )

    def test_inputs_not_modified(self):
        n = self.A.n_rows
        b, x = np.ones(n), np.ones(n)
        vcycle(self.H, b, x)
        np.testing.assert_array_equal(x, np.ones(n))

    def test_preconditioner_is_symmetric(self):
        A = multiscale(10)
        H = setup(A, 0.25, AmgParams(coarse_size_limit=10))
        self.assertGreaterEqual(H.n_levels, 2)
        n = A.n_rows
        B = np.column_stack([vcycle(H, e, np.zeros(n)) for e in np.eye(n)])
        np.testing.assert_allclose(B, B.T, atol=1e-8 * np.abs(B).max())
        self.assertGreater(np.linalg.eigvalsh((B + B.T) / 2).min(), 0.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            vcycle(self.H, np.ones(3), np.zeros(3))


class ConvergenceFactorTests(SimpleTestCase):
    def test_exact_solver_has_zero_factor(self):
        H = setup(poisson(4), 0.25)
        self.assertLess(tg_convergence_factor_theoretical(H).value, 1e-10)
        self.assertLess(tg_convergence_factor_computed(H, 20).value, 1e-10)

    def test_theoretical_matches_computed(self):
        for A in (poisson(12), multiscale(12, seed=2, M=3)):
            H = setup(A, 0.25, AmgParams(max_levels=2, coarse_size_limit=1))
            theory = tg_convergence_factor_theoretical(H)
            computed = tg_convergence_factor_computed(H, 300)
            self.assertTrue(theory.converged)
            self.assertLess(theory.value, 1.0)
            self.assertAlmostEqual(theory.value, computed.value, delta=0.02)

    def test_scale_invariance(self):
        A = multiscale(12)
        params = AmgParams(max_levels=2, coarse_size_limit=1)
        base = tg_convergence_factor_theoretical(setup(A, 0.25, params)).value
        scaled = tg_convergence_factor_theoretical(setup(A.scaled(3.5), 0.25, params)).value
        self.assertAlmostEqual(base, scaled, delta=1e-8)

    def test_requires_two_grid(self):
        H = setup(poisson(32), 0.25, AmgParams(coarse_size_limit=16))
        self.assertGreater(H.n_levels, 2)
        with self.assertRaises(ValueError):
            tg_convergence_factor_theoretical(H)
        with self.assertRaises(ValueError):
            tg_convergence_factor_computed(setup(poisson(12), 0.25, AmgParams(max_levels=2, coarse_size_limit=1)), 5)
