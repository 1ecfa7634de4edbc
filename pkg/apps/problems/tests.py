import numpy as np
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.sparse.analysis import drop_min_entry, multiscale_report
from apps.sparse.csr import CsrMatrix

from .generators import (
    DiffusionSpec,
    NotMultiscale,
    RadiationSurrogateSpec,
    boundary_matrix,
    gen_diffusion,
    gen_radiation_surrogate,
    spec_from_dict,
)


def poisson_2d(n):
    dense = 4.0 * np.eye(n * n)
    for y in range(n):
        for x in range(n):
            c = x + n * y
            if x + 1 < n:
                dense[c, c + 1] = dense[c + 1, c] = -1.0
            if y + 1 < n:
                dense[c, c + n] = dense[c + n, c] = -1.0
    return dense


class DiffusionTests(SimpleTestCase):
    def test_isotropic_single_block_is_poisson(self):
        problem = gen_diffusion(DiffusionSpec(dim=2, nx=3, ny=3, M=0))
        np.testing.assert_array_equal(problem.A.to_dense(), poisson_2d(3))
        np.testing.assert_array_equal(problem.b, np.ones(9))
        self.assertEqual(problem.meta["problem"], "diffusion")

    def test_3d_isotropic_is_scaled_seven_point_stencil(self):
        A = gen_diffusion(DiffusionSpec(dim=3, nx=4, ny=4, nz=4, M=0)).A
        dense = A.to_dense()
        h = 0.25
        np.testing.assert_allclose(np.diag(dense), 6.0 * h)
        off = dense - np.diag(np.diag(dense))
        np.testing.assert_allclose(off[off != 0], -h)
        self.assertLessEqual(A.nnz, 7 * A.n_rows)

    def test_block_random_matrix_is_spd(self):
        A = gen_diffusion(DiffusionSpec(dim=2, nx=4, ny=4, bx=2, by=2, M=5, seed=1)).A
        dense = A.to_dense()
        np.testing.assert_array_equal(dense, dense.T)
        self.assertGreater(np.linalg.eigvalsh(dense).min(), 0.0)
        self.assertLessEqual(A.nnz, 5 * A.n_rows)
        off = dense - np.diag(np.diag(dense))
        self.assertTrue((np.diag(dense) > 0).all())
        self.assertTrue((off <= 0).all())

    def test_block_random_matrices_are_multiscale(self):
        found = [
            multiscale_report(
                gen_diffusion(DiffusionSpec(dim=2, nx=4, ny=4, bx=2, by=2, M=5, seed=s)).A, 3.0
            ).is_multiscale
            for s in range(1, 9)
        ]
        self.assertTrue(any(found))

    def test_seeds_change_values_not_pattern(self):
        a = gen_diffusion(DiffusionSpec(dim=2, nx=4, ny=4, bx=2, by=2, M=5, seed=1)).A
        b = gen_diffusion(DiffusionSpec(dim=2, nx=4, ny=4, bx=2, by=2, M=5, seed=2)).A
        self.assertTrue(a.same_pattern(b))
        self.assertFalse(np.array_equal(a.values, b.values))

    def test_deterministic(self):
        spec = DiffusionSpec(dim=3, nx=5, ny=4, nz=3, bx=2, by=2, bz=3, M=4, seed=11)
        a, b = gen_diffusion(spec).A, gen_diffusion(spec).A
        self.assertTrue(a.same_pattern(b))
        np.testing.assert_array_equal(a.values, b.values)

    def test_kappa_y_fixed_makes_y_faces_unit(self):
        A = gen_diffusion(
            DiffusionSpec(dim=2, nx=4, ny=4, bx=2, by=2, M=6, seed=3, kappa_y_fixed=True)
        ).A
        dense = A.to_dense()
        # y neighbours of cell (x=0, y=0) and (x=3, y=2)
        self.assertEqual(dense[0, 4], -1.0)
        self.assertEqual(dense[11, 15], -1.0)

    def test_spec_violations(self):
        bad = [
            {"dim": 4, "nx": 4, "ny": 4, "M": 1},
            {"dim": 2, "nx": 1, "ny": 4, "M": 1},
            {"dim": 2, "nx": 4, "ny": 4, "bx": 5, "M": 1},
            {"dim": 2, "nx": 4, "ny": 4, "M": -1},
            {"dim": 3, "nx": 4, "ny": 4, "M": 1},
        ]
        for data in bad:
            with self.subTest(data=data):
                with self.assertRaises(ValidationError):
                    spec_from_dict(data)
        with self.assertRaises(ValidationError):
            gen_diffusion(DiffusionSpec(dim=2, nx=3, ny=3, bx=4, M=1))

    def test_spec_from_dict(self):
        spec = spec_from_dict({"dim": 2, "nx": 6, "ny": 5, "bx": 2, "by": 1, "M": 3, "seed": 9})
        self.assertIsInstance(spec, DiffusionSpec)
        self.assertEqual((spec.nz, spec.bz, spec.seed), (1, 1, 9))
        rad = spec_from_dict({"nx": 3, "ny": 3, "nz": 3, "M": 2, "omega_er": 1.0, "omega_ei": 0.5})
        self.assertIsInstance(rad, RadiationSurrogateSpec)


class RadiationSurrogateTests(SimpleTestCase):
    def test_decoupled_limit_is_block_diagonal(self):
        spec = RadiationSurrogateSpec(nx=3, ny=3, nz=3, M=3, seed=7, omega_er=0.0, omega_ei=0.0)
        dense = gen_radiation_surrogate(spec).A.to_dense()
        n = 27
        for i in range(3):
            for j in range(3):
                if i != j:
                    self.assertFalse(dense[i * n:(i + 1) * n, j * n:(j + 1) * n].any())

    def test_block_pattern(self):
        spec = RadiationSurrogateSpec(nx=3, ny=3, nz=3, M=3, seed=7, omega_er=2.0, omega_ei=5.0)
        problem = gen_radiation_surrogate(spec)
        dense = problem.A.to_dense()
        n = 27
        self.assertEqual(dense.shape, (81, 81))
        self.assertEqual(len(problem.b), 81)
        self.assertFalse(dense[:n, 2 * n:].any())
        self.assertFalse(dense[2 * n:, :n].any())
        for rows, cols in ((slice(0, n), slice(n, 2 * n)), (slice(n, 2 * n), slice(2 * n, 3 * n))):
            coupling = dense[rows, cols]
            np.testing.assert_array_equal(coupling, np.diag(np.diag(coupling)))
            self.assertTrue((np.diag(coupling) <= 0).all())
        np.testing.assert_array_equal(dense, dense.T)

    def test_weak_diagonal_dominance(self):
        for seed in (0, 7, 21):
            spec = RadiationSurrogateSpec(
                nx=3, ny=4, nz=2, M=4, seed=seed, omega_er=10.0, omega_ei=0.1, bx=2
            )
            dense = gen_radiation_surrogate(spec).A.to_dense()
            diag = np.abs(np.diag(dense))
            off = np.abs(dense).sum(axis=1) - diag
            self.assertTrue((diag >= off * (1 - 1e-14)).all())

    def test_negative_coupling_rejected(self):
        with self.assertRaises(ValidationError):
            gen_radiation_surrogate(
                RadiationSurrogateSpec(nx=3, ny=3, nz=3, M=1, omega_er=-1.0, omega_ei=0.0)
            )


class BoundaryMatrixTests(SimpleTestCase):
    def test_one_drop_from_single_scale_is_fixed_point(self):
        A = CsrMatrix.from_dense([[2.0, -1e5, -1.0], [-1e5, 2.0, 0.0], [-1.0, 0.0, 2.0]])
        B = boundary_matrix(A, 4.0)
        self.assertTrue(B.same_pattern(A))
        np.testing.assert_array_equal(B.values, A.values)

    def test_diffusion_boundary_matrix(self):
        A = gen_diffusion(
            DiffusionSpec(dim=2, nx=12, ny=12, bx=4, by=4, M=6, seed=0, kappa_y_fixed=True)
        ).A
        self.assertTrue(multiscale_report(A, 3.0).is_multiscale)
        B = boundary_matrix(A, 3.0)
        self.assertTrue(multiscale_report(B, 3.0).is_multiscale)
        self.assertFalse(multiscale_report(drop_min_entry(B), 3.0).is_multiscale)
        self.assertLessEqual(B.nnz, A.nnz)

    def test_single_scale_input_rejected(self):
        with self.assertRaises(NotMultiscale):
            boundary_matrix(CsrMatrix.from_dense(poisson_2d(3)), 1.0)
