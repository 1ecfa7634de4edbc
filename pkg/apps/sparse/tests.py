import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from .analysis import (
    NoOffDiagonalEntries,
    drop_min_entry,
    is_structurally_symmetric,
    multiscale_report,
)
from .csr import CsrMatrix, DimensionMismatch, ZeroDiagonal, spmv, spmv_transpose, transpose
from .mmio import MatrixMarketError, read_matrix_market, write_matrix_market


def laplacian_2d(n):
    main = 4.0 * np.eye(n * n)
    for i in range(n):
        for j in range(n):
            k = i * n + j
            if j + 1 < n:
                main[k, k + 1] = main[k + 1, k] = -1.0
            if i + 1 < n:
                main[k, k + n] = main[k + n, k] = -1.0
    return CsrMatrix.from_dense(main)


def random_sparse(rng, n_rows, n_cols, nnz):
    keys = rng.choice(n_rows * n_cols, size=nnz, replace=False)
    return CsrMatrix.from_coo(keys // n_cols, keys % n_cols, rng.normal(size=nnz), (n_rows, n_cols))


class CsrMatrixTests(SimpleTestCase):
    def test_invariants_rejected(self):
        with self.assertRaises(ValueError):
            CsrMatrix(2, 2, [0, 1], [0], [1.0])
        with self.assertRaises(ValueError):
            CsrMatrix(1, 3, [0, 2], [2, 1], [1.0, 1.0])
        with self.assertRaises(ValueError):
            CsrMatrix(1, 2, [0, 1], [2], [1.0])

    def test_from_coo_rejects_duplicates(self):
        with self.assertRaises(ValueError):
            CsrMatrix.from_coo([0, 0], [1, 1], [1.0, 2.0], (2, 2))

    def test_from_coo_sorts_columns(self):
        A = CsrMatrix.from_coo([1, 0, 0], [0, 1, 0], [3.0, 2.0, 1.0], (2, 2))
        np.testing.assert_array_equal(A.row_ptr, [0, 2, 3])
        np.testing.assert_array_equal(A.col_idx, [0, 1, 0])
        np.testing.assert_array_equal(A.values, [1.0, 2.0, 3.0])

    def test_diagonal_requires_nonzero(self):
        A = CsrMatrix.from_dense([[1.0, 2.0], [3.0, 0.0]])
        with self.assertRaises(ZeroDiagonal) as ctx:
            A.diagonal(require_nonzero=True)
        self.assertEqual(ctx.exception.rows, [1])
        self.assertFalse(A.has_full_diagonal())


class KernelTests(SimpleTestCase):
    def test_spmv_examples(self):
        np.testing.assert_array_equal(spmv(CsrMatrix.identity(2), [3.0, -1.0]), [3.0, -1.0])
        A = CsrMatrix.from_dense([[2.0, 1.0], [0.0, 3.0]])
        np.testing.assert_array_equal(spmv(A, [1.0, 1.0]), [3.0, 3.0])
        np.testing.assert_array_equal(spmv(CsrMatrix.from_dense([[5.0]]), [0.0]), [0.0])

    def test_spmv_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            spmv(CsrMatrix.identity(3), np.ones(2))
        with self.assertRaises(DimensionMismatch):
            spmv_transpose(CsrMatrix.from_dense(np.ones((2, 3))), np.ones(3))

    def test_spmv_matches_dense_oracle(self):
        rng = np.random.default_rng(0)
        A = random_sparse(rng, 30, 20, 90)
        x = rng.normal(size=20)
        np.testing.assert_allclose(spmv(A, x), A.to_dense() @ x, rtol=1e-13, atol=1e-14)

    def test_spmv_transpose_examples(self):
        x = np.array([4.0, -2.0, 7.0])
        np.testing.assert_array_equal(spmv_transpose(CsrMatrix.identity(3), x), x)
        A = CsrMatrix.from_dense([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_array_equal(spmv_transpose(A, [1.0, 2.0]), [0.0, 1.0])
        B = CsrMatrix.from_dense([[2.0, 1.0], [0.0, 3.0]])
        np.testing.assert_array_equal(spmv_transpose(B, [1.0, 1.0]), [2.0, 4.0])

    def test_spmv_transpose_agrees_with_transpose(self):
        rng = np.random.default_rng(1)
        A = random_sparse(rng, 12, 9, 30)
        x = rng.normal(size=12)
        np.testing.assert_allclose(spmv_transpose(A, x), spmv(transpose(A), x), rtol=1e-13)

    def test_transpose(self):
        I = CsrMatrix.identity(4)
        np.testing.assert_array_equal(transpose(I).to_dense(), np.eye(4))
        A = CsrMatrix.from_dense([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_array_equal(transpose(A).to_dense(), [[0.0, 0.0], [1.0, 0.0]])

        B = random_sparse(np.random.default_rng(2), 5, 4, 7)
        Bt = transpose(B)
        self.assertEqual(Bt.shape, (4, 5))
        np.testing.assert_array_equal(Bt.to_dense(), B.to_dense().T)
        BB = transpose(Bt)
        self.assertTrue(BB.same_pattern(B))
        np.testing.assert_array_equal(BB.values, B.values)


class MultiscaleTests(SimpleTestCase):
    def test_uniform_row_is_not_multiscale(self):
        A = CsrMatrix.from_dense([[2.0, -1.0, -1.0], [-1.0, 2.0, 0.0], [-1.0, 0.0, 2.0]])
        report = multiscale_report(A, 0.5)
        self.assertNotIn(0, report.rows)
        self.assertFalse(report.is_multiscale)

    def test_wide_row_is_multiscale(self):
        A = CsrMatrix.from_dense([[2.0, -1e5, -1.0], [-1e5, 2.0, 0.0], [-1.0, 0.0, 2.0]])
        report = multiscale_report(A, 4)
        np.testing.assert_array_equal(report.rows, [0])
        self.assertAlmostEqual(report.max_row_ratio_log10, 5.0)
        self.assertEqual(report.to_dict()["multiscale_rows"], 1)

    def test_laplacian_is_single_scale(self):
        report = multiscale_report(laplacian_2d(5), 1e-6)
        self.assertFalse(report.is_multiscale)
        self.assertEqual(report.max_row_ratio_log10, 0.0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        dense = -(10.0 ** rng.uniform(0, 6, size=(8, 8)))
        np.fill_diagonal(dense, 1.0)
        A = CsrMatrix.from_dense(dense)
        base = multiscale_report(A, 3.0).rows
        for c in (2.0**-7, 8.0, -1.0, 3.7, -1e-3):
            np.testing.assert_array_equal(multiscale_report(A.scaled(c), 3.0).rows, base)

    def test_rejects_negative_delta(self):
        with self.assertRaises(ValueError):
            multiscale_report(CsrMatrix.identity(2), -1.0)


class DropMinEntryTests(SimpleTestCase):
    def test_symmetric_pair_removed(self):
        A = CsrMatrix.from_dense([[2.0, -1.0], [-1.0, 2.0]])
        B = drop_min_entry(A)
        self.assertEqual(B.nnz, 2)
        np.testing.assert_array_equal(B.to_dense(), [[2.0, 0.0], [0.0, 2.0]])

    def test_nonsymmetric_minimum_removed(self):
        A = CsrMatrix.from_dense([[4.0, -3.0, 0.0], [0.0, 4.0, -0.1], [-2.0, 0.0, 4.0]])
        self.assertFalse(is_structurally_symmetric(A))
        B = drop_min_entry(A)
        self.assertEqual(B.nnz, A.nnz - 1)
        self.assertEqual(B.to_dense()[1, 2], 0.0)
        self.assertEqual(B.to_dense()[0, 1], -3.0)

    def test_tie_break_is_lexicographic(self):
        dense = 4.0 * np.eye(4)
        dense[0, 3] = -0.1
        dense[2, 1] = -0.1
        dense[1, 0] = -5.0
        B = drop_min_entry(CsrMatrix.from_dense(dense))
        self.assertEqual(B.to_dense()[0, 3], 0.0)
        self.assertEqual(B.to_dense()[2, 1], -0.1)

    def test_diagonal_never_removed_and_loop_terminates(self):
        A = laplacian_2d(3)
        while True:
            try:
                nnz = A.nnz
                A = drop_min_entry(A)
            except NoOffDiagonalEntries:
                break
            self.assertLess(A.nnz, nnz)
        np.testing.assert_array_equal(A.to_dense(), 4.0 * np.eye(9))


class MatrixMarketTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _write(self, name, text):
        path = os.path.join(self.tmp.name, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_identity_round_trip(self):
        path = os.path.join(self.tmp.name, "eye.mtx")
        write_matrix_market(CsrMatrix.identity(3), path)
        A = read_matrix_market(path)
        np.testing.assert_array_equal(A.row_ptr, [0, 1, 2, 3])
        np.testing.assert_array_equal(A.values, np.ones(3))

    def test_full_precision_round_trip(self):
        B = random_sparse(np.random.default_rng(4), 6, 6, 15)
        path = os.path.join(self.tmp.name, "rand.mtx")
        write_matrix_market(B, path)
        A = read_matrix_market(path)
        self.assertTrue(A.same_pattern(B))
        np.testing.assert_array_equal(A.values, B.values)

    def test_single_entry_general(self):
        path = self._write("one.mtx", "%%MatrixMarket matrix coordinate real general\n% c\n2 3 1\n2 3 -4.5\n")
        A = read_matrix_market(path)
        self.assertEqual(A.shape, (2, 3))
        self.assertEqual(A.nnz, 1)
        self.assertEqual(A.to_dense()[1, 2], -4.5)

    def test_symmetric_expanded(self):
        path = self._write(
            "sym.mtx",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 2\n2 1 -1\n2 2 2\n",
        )
        A = read_matrix_market(path)
        self.assertEqual(A.nnz, 4)
        np.testing.assert_array_equal(A.to_dense(), [[2.0, -1.0], [-1.0, 2.0]])

    def test_unsupported_banner_fields(self):
        cases = {
            "pattern.mtx": ("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n", "field 'pattern'"),
            "skew.mtx": (
                "%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 1.0\n",
                "symmetry 'skew-symmetric'",
            ),
        }
        for name, (text, message) in cases.items():
            with self.subTest(name=name):
                with self.assertRaises(MatrixMarketError) as ctx:
                    read_matrix_market(self._write(name, text))
                self.assertEqual(ctx.exception.line_no, 1)
                self.assertIn(message, str(ctx.exception))

    def test_missing_file_is_os_error(self):
        with self.assertRaises(OSError):
            read_matrix_market(os.path.join(self.tmp.name, "absent.mtx"))

    def test_errors_name_the_line(self):
        cases = {
            "header.mtx": ("%%MatrixMarket matrix array real general\n1 1\n1\n", 1),
            "range.mtx": ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
            "dup.mtx": (
                "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n",
                4,
            ),
        }
        for name, (text, line) in cases.items():
            with self.subTest(name=name):
                with self.assertRaises(MatrixMarketError) as ctx:
                    read_matrix_market(self._write(name, text))
                self.assertEqual(ctx.exception.line_no, line)
                self.assertIn(f":{line}:", str(ctx.exception))
