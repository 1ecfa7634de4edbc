import os
import tempfile
from unittest import mock

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, tag

from apps.amg.hierarchy import SingularCoarseMatrix
from apps.amg.hierarchy import setup as amg_setup
from apps.krylov.gmres import SolverParams
from apps.problems.generators import DiffusionSpec, LinearProblem, NotMultiscale, gen_diffusion

from .boundary import boundary_sensitivity_experiment
from .grid import (
    GridPoint,
    ThetaRecord,
    grid_search,
    record_from_report,
    seed_from_id,
    sensitivity_report,
    theta_grid,
)


def small_problem(n=16, seed=2, M=4):
    return gen_diffusion(DiffusionSpec(dim=2, nx=n, ny=n, bx=4, by=4, M=M, seed=seed))


class ThetaGridTests(SimpleTestCase):
    def test_default_grid(self):
        grid = theta_grid()
        self.assertEqual(len(grid), 99)
        self.assertEqual(grid[0], 0.01)
        self.assertEqual(grid[-1], 0.99)
        self.assertIn(0.25, grid)
        self.assertIn(0.5, grid)

    def test_seed_from_id_is_stable(self):
        self.assertEqual(seed_from_id("m0001"), seed_from_id("m0001"))
        self.assertNotEqual(seed_from_id("m0001"), seed_from_id("m0002"))
        self.assertLess(seed_from_id("m0001"), 2**63)


class ThetaRecordTests(SimpleTestCase):
    def test_ties_go_to_smallest_theta(self):
        record = ThetaRecord(
            matrix_id="m",
            grid=[GridPoint(0.3, 10, True), GridPoint(0.2, 10, True), GridPoint(0.4, 12, True)],
        )
        self.assertEqual(record.theta_opt, 0.2)
        self.assertEqual(record.iters_min, 10)
        self.assertEqual(record.iters_max, 12)
        self.assertEqual(record.theta_at_max, 0.4)
        self.assertEqual(record.defaults, {})

    def test_summary_defaults(self):
        record = ThetaRecord(
            matrix_id="m7",
            grid=[GridPoint(0.25, 35, True), GridPoint(0.5, 20, True), GridPoint(0.68, 7, True),
                  GridPoint(0.01, 500, False)],
        )
        self.assertEqual(
            record.summary(),
            {
                "matrix_id": "m7",
                "theta_opt": 0.68,
                "iters_min": 7,
                "iters_max": 500,
                "theta_at_max": 0.01,
                "defaults": {"0.25": 35, "0.5": 20},
            },
        )

    def test_frame_round_trip(self):
        record = ThetaRecord(
            matrix_id="m3",
            grid=[GridPoint(0.1, 9, True, 0.1, 0.2, 3, 1.4), GridPoint(0.2, 500, False, 0.3, 0.4, 2, 1.2)],
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "grid.csv")
            record.to_frame().to_csv(path, index=False)
            back = ThetaRecord.from_frame(pd.read_csv(path, float_precision="round_trip"))
        self.assertEqual(back.grid, record.grid)
        self.assertEqual(back.matrix_id, "m3")


class GridSearchTests(SimpleTestCase):
    def test_singleton_grid(self):
        record = grid_search(small_problem(), [0.5])
        self.assertEqual(record.theta_opt, 0.5)
        self.assertEqual(len(record.grid), 1)

    def test_invalid_grid(self):
        with self.assertRaises(ValueError):
            grid_search(small_problem(), [])
        with self.assertRaises(ValueError):
            grid_search(small_problem(), [0.0, 0.5])
        with self.assertRaises(ValueError):
            grid_search(small_problem(), [0.5, 1.0])

    def test_optimum_is_minimal(self):
        record = grid_search(small_problem(), [0.1, 0.25, 0.4, 0.5, 0.7, 0.9], matrix_id="m0")
        self.assertTrue((record.iters_min <= record.iterations).all())
        self.assertIn(record.theta_opt, record.thetas)
        self.assertEqual(set(record.defaults), {"0.25", "0.5"})
        for point in record.grid:
            self.assertTrue(point.converged)
            self.assertGreaterEqual(point.levels, 2)

    def test_deterministic_and_thread_order_independent(self):
        grid = [0.1, 0.3, 0.5, 0.7, 0.9]
        serial = grid_search(small_problem(), grid, matrix_id="m1")
        threaded = grid_search(small_problem(), grid, matrix_id="m1", n_jobs=2)
        np.testing.assert_array_equal(serial.iterations, threaded.iterations)
        np.testing.assert_array_equal(serial.thetas, grid)

    def test_global_scaling_keeps_iteration_profile(self):
        problem = small_problem()
        grid = [0.1, 0.3, 0.5, 0.7, 0.9]
        base = grid_search(problem, grid, matrix_id="m2").iterations
        for c in (4.0, 0.125):
            scaled = LinearProblem(A=problem.A.scaled(c), b=problem.b)
            np.testing.assert_array_equal(grid_search(scaled, grid, matrix_id="m2").iterations, base)

    def test_setup_failure_recorded_as_worst_case(self):
        def failing_setup(A, theta, params):
            if theta > 0.5:
                raise SingularCoarseMatrix(1)
            return amg_setup(A, theta, params)

        with mock.patch("apps.oracle.grid.setup", side_effect=failing_setup):
            record = grid_search(small_problem(), [0.3, 0.7], solver_params=SolverParams(max_iter=80))
        failed = record.point_at(0.7)
        self.assertEqual(failed.iterations, 80)
        self.assertFalse(failed.converged)
        self.assertEqual(record.theta_opt, 0.3)

    def test_non_convergence_counts_max_iter(self):
        record = grid_search(small_problem(M=5), [0.5], solver_params=SolverParams(max_iter=1, tol=1e-14))
        self.assertEqual(record.iters_min, 1)
        self.assertFalse(record.grid[0].converged)

    @tag("slow")
    def test_multiscale_sweep_shows_sensitivity(self):
        problem = gen_diffusion(DiffusionSpec(dim=2, nx=64, ny=64, bx=8, by=8, M=5, seed=3))
        record = grid_search(problem, theta_grid(), matrix_id="m0003", n_jobs=2)
        self.assertGreaterEqual(record.iters_max / record.iters_min, 3)


class SensitivityReportTests(SimpleTestCase):
    def test_cardinality_and_round_trip(self):
        # 36 rows fit on one level, so each theta is a direct solve
        problem = gen_diffusion(DiffusionSpec(dim=2, nx=6, ny=6, bx=2, by=2, M=3, seed=1))
        record = grid_search(problem, theta_grid(), matrix_id="tiny")
        report = sensitivity_report(record)
        self.assertEqual(len(report), 100)
        self.assertEqual((report["row_type"] == "data").sum(), 99)
        summary = report.iloc[-1]
        self.assertEqual(summary["row_type"], "summary")
        self.assertEqual(summary["theta"], record.theta_opt)
        self.assertEqual(summary["default_0.25"], record.point_at(0.25).iterations)
        self.assertTrue(report["theta"].iloc[:-1].is_monotonic_increasing)

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "report.csv")
            report.to_csv(path, index=False)
            back = record_from_report(pd.read_csv(path, float_precision="round_trip"))
        self.assertEqual(back.grid, record.grid)
        self.assertEqual(back.default_thetas, (0.25, 0.5))
        self.assertEqual(back.summary(), record.summary())


class BoundaryExperimentTests(SimpleTestCase):
    def test_single_scale_input_rejected(self):
        with self.assertRaises(NotMultiscale):
            boundary_sensitivity_experiment(DiffusionSpec(dim=2, nx=12, ny=12, M=0), 3.0, grid=[0.25])

    def test_too_large_for_dense_analysis(self):
        with self.assertRaises(ValueError):
            boundary_sensitivity_experiment(DiffusionSpec(dim=2, nx=21, ny=20, M=4, bx=4), 3.0)

    @tag("slow")
    def test_sweep_on_regenerated_boundary_matrices(self):
        # four fields, jumps between 2.5x and 30x
        for seed in (0, 1, 2, 4):
            with self.subTest(seed=seed):
                spec = DiffusionSpec(dim=2, nx=12, ny=12, bx=4, by=4, M=6, seed=seed, kappa_y_fixed=True)
                experiment = boundary_sensitivity_experiment(spec, 3.0, factor_iters=300)
                rows = experiment.rows
                self.assertEqual(len(rows), 99)
                self.assertLess(experiment.nnz_boundary, experiment.nnz_original)
                self.assertGreaterEqual(experiment.jump_ratio, 2.0)

                k = rows.index[rows["theta"] == experiment.theta_star][0]
                below, above = rows.loc[k], rows.loc[k + 1]
                self.assertGreaterEqual(above["iterations"], 2 * below["iterations"])
                for side in (below, above):
                    self.assertLessEqual(abs(side["factor_theoretical"] - side["factor_computed"]), 0.02)
                settled = rows[rows["theoretical_converged"]]
                np.testing.assert_allclose(
                    settled["factor_theoretical"], settled["factor_computed"], atol=0.02
                )
