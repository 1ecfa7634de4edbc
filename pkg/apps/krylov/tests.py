import numpy as np
from django.test import SimpleTestCase, override_settings

from apps.amg.hierarchy import setup
from apps.problems.generators import DiffusionSpec, gen_diffusion
from apps.sparse.csr import CsrMatrix, DimensionMismatch, spmv

from .gmres import SolverParams, gmres


def poisson(n):
    return gen_diffusion(DiffusionSpec(dim=2, nx=n, ny=n, M=0))


class GmresTests(SimpleTestCase):
    def test_identity_converges_in_one_iteration(self):
        b = np.array([1.0, -2.0, 3.0])
        x, report = gmres(CsrMatrix.identity(3), b)
        self.assertTrue(report.converged)
        self.assertEqual(report.iterations, 1)
        np.testing.assert_allclose(x, b)

    def test_zero_rhs(self):
        x, report = gmres(CsrMatrix.identity(4), np.zeros(4))
        self.assertEqual(report.iterations, 0)
        self.assertTrue(report.converged)
        np.testing.assert_array_equal(x, np.zeros(4))

    def test_amg_preconditioned_poisson(self):
        problem = poisson(32)
        H = setup(problem.A, 0.25)
        x, report = gmres(problem.A, problem.b, H, tol=1e-8)
        self.assertTrue(report.converged)
        self.assertLessEqual(report.iterations, 25)
        residual = np.linalg.norm(problem.b - spmv(problem.A, x)) / np.linalg.norm(problem.b)
        self.assertLess(residual, 1e-8 * (1 + 1e-8))
        self.assertEqual(len(report.relative_residuals), report.iterations)

    def test_iteration_cap(self):
        problem = gen_diffusion(DiffusionSpec(dim=2, nx=32, ny=32, bx=8, by=8, M=5, seed=3))
        x, report = gmres(problem.A, problem.b, None, tol=1e-12, max_iter=5, restart=30)
        self.assertFalse(report.converged)
        self.assertEqual(report.iterations, 5)

    def test_unpreconditioned_full_krylov_space(self):
        rng = np.random.default_rng(0)
        n = 12
        dense = rng.normal(size=(n, n)) + n * np.eye(n)
        b = rng.normal(size=n)
        x, report = gmres(CsrMatrix.from_dense(dense), b, tol=1e-12, restart=n)
        self.assertTrue(report.converged)
        self.assertLessEqual(report.iterations, n)
        np.testing.assert_allclose(dense @ x, b, rtol=1e-10, atol=1e-10)

    def test_residuals_monotone_within_cycle(self):
        problem = poisson(16)
        restart = 5
        _, report = gmres(problem.A, problem.b, None, tol=1e-10, restart=restart, max_iter=40)
        history = report.relative_residuals
        for start in range(0, len(history), restart):
            cycle = history[start:start + restart]
            self.assertTrue(all(a >= b for a, b in zip(cycle, cycle[1:])))

    def test_restarts_reach_convergence(self):
        problem = poisson(16)
        H = setup(problem.A, 0.5)
        _, full = gmres(problem.A, problem.b, H, restart=30)
        _, short = gmres(problem.A, problem.b, H, restart=2)
        self.assertTrue(full.converged and short.converged)
        self.assertGreaterEqual(short.iterations, full.iterations)

    def test_deterministic(self):
        problem = gen_diffusion(DiffusionSpec(dim=2, nx=20, ny=20, bx=4, by=4, M=4, seed=1))
        H = setup(problem.A, 0.3)
        x1, r1 = gmres(problem.A, problem.b, H)
        x2, r2 = gmres(problem.A, problem.b, H)
        self.assertEqual(r1.iterations, r2.iterations)
        self.assertEqual(r1.relative_residuals, r2.relative_residuals)
        np.testing.assert_array_equal(x1, x2)

    def test_bad_arguments(self):
        with self.assertRaises(DimensionMismatch):
            gmres(CsrMatrix.identity(3), np.ones(2))
        with self.assertRaises(ValueError):
            gmres(CsrMatrix.identity(3), np.ones(3), tol=0.0)
        with self.assertRaises(ValueError):
            gmres(CsrMatrix.identity(3), np.ones(3), restart=0)

    @override_settings(AUTOAMG_GMRES={"tol": 1e-6, "max_iter": 50, "restart": 10})
    def test_params_from_settings(self):
        params = SolverParams.from_settings(restart=20)
        self.assertEqual(params, SolverParams(tol=1e-6, max_iter=50, restart=20))
