import json
import os
import shutil
import statistics
import tempfile
import threading
import time
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
from django.apps import apps as django_apps
from django.core.exceptions import ImproperlyConfigured
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings, tag

from apps.amg.hierarchy import AmgParams
from apps.krylov.gmres import SolverParams
from apps.model.head import init_model, predict_theta
from apps.model.persistence import load_model, save_model
from apps.oracle.boundary import BOUNDARY_COLUMNS
from apps.problems.generators import DiffusionSpec, gen_diffusion
from apps.sparse.csr import CsrMatrix
from apps.sparse.mmio import read_matrix_market, write_matrix_market

from .manifest import DatasetManifest
from .pipeline import draw_spec, eval_table, evaluate_model, label_dataset, timed_solve
from .services.validation import check_pipeline_settings

COARSE_GRID = [0.1, 0.9, 0.1]
SMALL_CONFIG = {"count": 4, "dim": 2, "nx": [8, 12], "bx": [2, 4], "M": [2, 4], "seed": 0}
SMALL_MODEL = {"gcin": {"layers": 2, "hidden": 4, "output": 4}, "head": {"hidden": 4}}


class PipelineTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)

    def write_json(self, name, data):
        path = self.tmp / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()

    def generate(self, config=None, out_dir=None):
        out_dir = out_dir or self.tmp / "data"
        self.call("gen", self.write_json("gen.json", config or SMALL_CONFIG), out_dir=str(out_dir))
        return out_dir

    def set_labels(self, out_dir, theta):
        manifest = DatasetManifest.load(out_dir / "manifest.json")
        for entry in manifest.entries:
            entry.theta_opt = theta
            entry.iters_at_opt = 1
        manifest.save()
        return manifest


class SettingsValidationTests(SimpleTestCase):
    def test_default_settings_pass(self):
        check_pipeline_settings()

    @override_settings(AUTOAMG_THETA_GRID=[0.0, 1.2, -0.1], AUTOAMG_DEFAULT_THETAS=[1.5])
    def test_every_problem_reported(self):
        with self.assertRaises(ImproperlyConfigured) as ctx:
            check_pipeline_settings()
        message = str(ctx.exception)
        self.assertIn("AUTOAMG_THETA_GRID bounds", message)
        self.assertIn("step must be positive", message)
        self.assertIn("AUTOAMG_DEFAULT_THETAS", message)

    @override_settings(AUTOAMG_GMRES={"tol": 0.0, "max_iter": 500, "restart": 30})
    def test_non_positive_tolerance(self):
        with self.assertRaises(ImproperlyConfigured):
            check_pipeline_settings()

    def test_no_auth_or_contenttypes_apps(self):
        self.assertFalse(django_apps.is_installed("django.contrib.auth"))
        self.assertFalse(django_apps.is_installed("django.contrib.contenttypes"))


class GlobalFlagTests(PipelineTestCase):
    def test_seed_rejected_where_unused(self):
        for command in ("gridsearch", "eval"):
            with self.assertRaisesMessage(CommandError, f"--seed has no effect on {command}"):
                self.call(command, out_dir=str(self.tmp), seed=3)

    def test_predict_rejects_seed_and_threads(self):
        path = self.tmp / "eye.mtx"
        write_matrix_market(CsrMatrix.identity(3), path)
        with self.assertRaisesMessage(CommandError, "--threads has no effect on predict"):
            self.call("predict", str(path), threads=2)
        with self.assertRaisesMessage(CommandError, "--seed has no effect on predict"):
            self.call("predict", str(path), seed=1)


class GenCommandTests(PipelineTestCase):
    def test_cardinality_and_split(self):
        out_dir = self.generate()
        manifest = DatasetManifest.load(out_dir / "manifest.json")
        self.assertEqual([e.matrix_id for e in manifest.entries], ["m0000", "m0001", "m0002", "m0003"])
        self.assertEqual([e.split for e in manifest.entries], ["train"] * 3 + ["test"])
        self.assertEqual(len(list((out_dir / "matrices").glob("*.mtx"))), 4)
        for entry in manifest.entries:
            A = read_matrix_market(manifest.matrix_file(entry))
            self.assertEqual((A.n_rows, A.nnz), (entry.n_rows, entry.nnz))
            self.assertTrue(8 <= entry.spec["nx"] <= 12)
            self.assertEqual(entry.spec["nx"], entry.spec["ny"])
            self.assertEqual(entry.spec["seed"], int(entry.matrix_id[1:]))
            self.assertEqual(entry.group, "2d")
            self.assertIsNone(entry.theta_opt)

    def test_rerun_is_byte_identical(self):
        first = self.generate(out_dir=self.tmp / "a")
        second = self.generate(out_dir=self.tmp / "b")
        names = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
        self.assertEqual(names, sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file()))
        for name in names:
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_threads_do_not_change_files(self):
        config = self.write_json("gen.json", {**SMALL_CONFIG, "count": 6})
        self.call("gen", config, out_dir=str(self.tmp / "serial"), threads=1)
        self.call("gen", config, out_dir=str(self.tmp / "threaded"), threads=3)
        serial = sorted(p.relative_to(self.tmp / "serial") for p in (self.tmp / "serial").rglob("*") if p.is_file())
        self.assertEqual(len(serial), 7)
        for name in serial:
            self.assertEqual((self.tmp / "serial" / name).read_bytes(), (self.tmp / "threaded" / name).read_bytes())

    def test_seed_flag_changes_sizes_not_coefficient_seeds(self):
        base = [draw_spec({**SMALL_CONFIG, "problem": "diffusion", "kappa_y_fixed": False}, i, 0) for i in range(8)]
        other = [draw_spec({**SMALL_CONFIG, "problem": "diffusion", "kappa_y_fixed": False}, i, 1) for i in range(8)]
        self.assertEqual([s.seed for s in base], [s.seed for s in other])
        self.assertNotEqual([s.nx for s in base], [s.nx for s in other])

    def test_empty_dataset_warns(self):
        out = self.call("gen", self.write_json("gen.json", {"count": 0}), out_dir=str(self.tmp / "empty"))
        self.assertIn("No matrices generated", out)
        self.assertEqual(DatasetManifest.load(self.tmp / "empty" / "manifest.json").entries, [])

    def test_mixed_and_radiation_datasets(self):
        mixed = self.generate({"count": 4, "dim": "mixed", "nx": [4, 5], "bx": [1, 2]}, self.tmp / "mixed")
        manifest = DatasetManifest.load(mixed / "manifest.json")
        self.assertEqual([e.group for e in manifest.entries], ["2d", "3d", "2d", "3d"])

        radiation = self.generate(
            {"count": 2, "problem": "radiation", "nx": [3, 4], "bx": [1, 2], "omega_er": [0.5, 1.0]},
            self.tmp / "radiation",
        )
        manifest = DatasetManifest.load(radiation / "manifest.json")
        self.assertEqual([e.group for e in manifest.entries], ["radiation", "radiation"])
        self.assertEqual(manifest.entries[0].n_rows, 3 * manifest.entries[0].spec["nx"] ** 3)

    def test_invalid_config(self):
        with self.assertRaises(CommandError):
            self.call("gen", self.write_json("bad.json", {"count": 2, "nx": [12, 8]}), out_dir=str(self.tmp))
        with self.assertRaises(CommandError):
            self.call("gen", str(self.tmp / "missing.json"), out_dir=str(self.tmp))

    def test_unwritable_output(self):
        blocker = self.tmp / "file"
        blocker.write_text("not a directory")
        with self.assertRaises(CommandError):
            self.call("gen", self.write_json("gen.json", SMALL_CONFIG), out_dir=str(blocker / "data"))


@override_settings(AUTOAMG_THETA_GRID=COARSE_GRID)
class GridsearchCommandTests(PipelineTestCase):
    def test_labels_every_entry(self):
        out_dir = self.generate()
        out = self.call("gridsearch", out_dir=str(out_dir))
        self.assertIn("Labeled 4 matrices", out)
        manifest = DatasetManifest.load(out_dir / "manifest.json")
        for entry in manifest.entries:
            self.assertIn(entry.theta_opt, [round(0.1 * k, 10) for k in range(1, 10)])
            grid = pd.read_csv(manifest.resolve(entry.grid_csv))
            self.assertEqual(len(grid), 9)
            self.assertEqual(entry.iters_at_opt, grid["iterations"].min())
            summary = json.loads(manifest.resolve(f"grids/{entry.matrix_id}.json").read_text())
            self.assertEqual(summary["theta_opt"], entry.theta_opt)

        saved = json.loads((out_dir / "manifest.json").read_text())
        self.assertEqual(manifest.to_dict(), saved)

    def test_only_missing_entries_are_computed(self):
        out_dir = self.generate()
        manifest = self.set_labels(out_dir, 0.5)
        manifest.entries[2].theta_opt = None
        manifest.save()
        self.assertEqual(label_dataset(DatasetManifest.load(out_dir / "manifest.json")), ["m0002"])
        self.assertIn("already labeled", self.call("gridsearch", out_dir=str(out_dir)))

    def test_force_relabels(self):
        out_dir = self.generate()
        self.set_labels(out_dir, 0.55)
        self.assertIn("Labeled 4 matrices", self.call("gridsearch", out_dir=str(out_dir), force=True))
        manifest = DatasetManifest.load(out_dir / "manifest.json")
        self.assertTrue(all(e.theta_opt != 0.55 for e in manifest.entries))

    def test_missing_matrix_file(self):
        out_dir = self.generate()
        os.remove(out_dir / "matrices" / "m0001.mtx")
        with self.assertRaisesMessage(CommandError, "m0001"):
            self.call("gridsearch", out_dir=str(out_dir))


class TrainCommandTests(PipelineTestCase):
    def test_missing_labels_are_listed(self):
        out_dir = self.generate()
        with self.assertRaisesMessage(CommandError, "m0000, m0001, m0002"):
            self.call("train", out_dir=str(out_dir))

    def test_constant_labels_fit_and_artifacts_written(self):
        out_dir = self.generate()
        self.set_labels(out_dir, 0.5)
        config = self.write_json(
            "train.json", {"epochs": 300, "learning_rate": 0.01, "validation_fraction": 0.0, **SMALL_MODEL}
        )
        self.call("train", out_dir=str(out_dir), config=config)
        model = load_model(out_dir / "model.json")
        self.assertLess(model.metadata["best_loss"], 1e-4)
        self.assertEqual(model.metadata["train_ids"], ["m0000", "m0001", "m0002"])
        log = pd.read_csv(out_dir / "training_log.csv")
        self.assertEqual(list(log.columns), ["epoch", "train_loss", "val_loss"])
        self.assertEqual(len(log), 301)

    def test_seed_flag_changes_curves(self):
        out_dir = self.generate()
        self.set_labels(out_dir, 0.4)
        config = self.write_json("train.json", {"epochs": 3, **SMALL_MODEL})
        curves = []
        for seed in (1, 2, 1):
            self.call("train", out_dir=str(out_dir), config=config, seed=seed)
            curves.append((out_dir / "training_log.csv").read_text())
        self.assertNotEqual(curves[0], curves[1])
        self.assertEqual(curves[0], curves[2])

    def test_invalid_train_config(self):
        out_dir = self.generate()
        self.set_labels(out_dir, 0.4)
        with self.assertRaises(CommandError):
            self.call("train", out_dir=str(out_dir), config=self.write_json("t.json", {"batch_size": 0}))


class EvalTests(PipelineTestCase):
    def labeled_dataset(self, theta):
        out_dir = self.generate({**SMALL_CONFIG, "count": 6, "test_fraction": 0.5})
        return self.set_labels(out_dir, theta)

    def test_oracle_model_matches_optimum(self):
        manifest = self.labeled_dataset(0.3)
        with mock.patch("apps.cli.pipeline.predict_theta", return_value=0.3):
            result = evaluate_model(manifest, init_model(seed=0), defaults=[0.25, 0.5], repeats=1)
        per_matrix = result.per_matrix
        self.assertEqual(per_matrix["matrix_id"].tolist(), ["m0003", "m0004", "m0005"])
        np.testing.assert_array_equal(per_matrix["iter_auto"], per_matrix["iter_opt"])
        all_row = result.table[result.table["group"] == "all"].iloc[0]
        self.assertEqual(all_row["iter_auto_mean"], all_row["iter_opt_mean"])

    def test_default_model_matches_default(self):
        manifest = self.labeled_dataset(0.3)
        with mock.patch("apps.cli.pipeline.predict_theta", return_value=0.5):
            result = evaluate_model(manifest, init_model(seed=0), defaults=[0.5, 0.25], repeats=1)
        np.testing.assert_array_equal(result.per_matrix["iter_auto"], result.per_matrix["iter_default_0.5"])
        row = result.table.iloc[-1]
        self.assertEqual(row["iter_default_mean"], row["iter_default_0.5"])
        self.assertEqual(row["speedup"], row["speedup_0.5"])

    def test_table_recomputes_from_rows(self):
        per_matrix = pd.DataFrame(
            {
                "matrix_id": ["a", "b", "c"],
                "group": ["3d", "2d", "3d"],
                "n_rows": [100, 64, 300],
                "iter_opt": [5, 6, 7],
                "time_opt": [0.1, 0.2, 0.3],
                "iter_auto": [6, 6, 8],
                "time_auto": [0.2, 0.2, 0.4],
                "iter_default_0.25": [9, 7, 11],
                "time_default_0.25": [0.4, 0.3, 0.8],
            }
        )
        table = eval_table(per_matrix, [0.25])
        self.assertEqual(table["group"].tolist(), ["2d", "3d", "all"])
        three_d = table.iloc[1]
        self.assertEqual(three_d["count"], 2)
        self.assertAlmostEqual(three_d["nrow_mean"], 200.0)
        self.assertAlmostEqual(three_d["speedup"], 0.6 / 0.3)
        all_row = table.iloc[2]
        self.assertAlmostEqual(
            all_row["speedup"], per_matrix["time_default_0.25"].mean() / per_matrix["time_auto"].mean()
        )
        self.assertEqual(all_row["iter_default_mean"], all_row["iter_default_0.25"])

    def test_command_writes_tables(self):
        manifest = self.labeled_dataset(0.3)
        save_model(init_model(seed=0, **SMALL_MODEL), manifest.root / "model.json")
        self.call("eval", out_dir=str(manifest.root), defaults=[0.25, 0.5], repeats=1)
        table = pd.read_csv(manifest.root / "eval_table.csv")
        self.assertIn("speedup_0.25", table.columns)
        self.assertIn("speedup_0.5", table.columns)
        per_matrix = pd.read_csv(manifest.root / "eval_matrices.csv")
        self.assertEqual(len(per_matrix), 3)
        self.assertTrue(((per_matrix["theta_auto"] >= 0.01) & (per_matrix["theta_auto"] <= 0.99)).all())

    def test_timed_solves_stay_on_calling_thread(self):
        manifest = self.labeled_dataset(0.3)
        threads = set()

        def recording(*args, **kwargs):
            threads.add(threading.get_ident())
            return timed_solve(*args, **kwargs)

        with mock.patch("apps.cli.pipeline.timed_solve", side_effect=recording):
            result = evaluate_model(
                manifest, init_model(seed=0, **SMALL_MODEL), defaults=[0.5], repeats=1, n_jobs=2
            )
        self.assertEqual(threads, {threading.get_ident()})
        self.assertEqual(len(result.per_matrix), 3)
        self.assertTrue((result.per_matrix["time_auto"] > 0).all())

    def test_unlabeled_test_split(self):
        out_dir = self.generate()
        with self.assertRaisesMessage(ValueError, "m0003"):
            evaluate_model(DatasetManifest.load(out_dir / "manifest.json"), init_model(seed=0), repeats=1)


class PredictCommandTests(PipelineTestCase):
    def setUp(self):
        super().setUp()
        self.model_path = self.tmp / "model.json"
        save_model(init_model(seed=0, **SMALL_MODEL), self.model_path)

    def test_trivial_matrix_gets_theta_in_range(self):
        path = self.tmp / "eye.mtx"
        write_matrix_market(CsrMatrix.identity(5), path)
        result = json.loads(self.call("predict", str(path), model=str(self.model_path), time=True))
        self.assertTrue(0.01 <= result["theta_auto"] <= 0.99)
        self.assertEqual(result["multiscale"]["multiscale_rows"], 0)
        self.assertIn("inference_seconds", result)

    def test_solve_reports_convergence(self):
        out_dir = self.generate()
        matrix = out_dir / "matrices" / "m0000.mtx"
        result = json.loads(self.call("predict", str(matrix), model=str(self.model_path), solve=True))
        self.assertTrue(result["solve"]["converged"])
        self.assertGreaterEqual(result["hierarchy"]["levels"], 1)

    def test_missing_model(self):
        path = self.tmp / "eye.mtx"
        write_matrix_market(CsrMatrix.identity(3), path)
        with self.assertRaises(CommandError):
            self.call("predict", str(path), model=str(self.tmp / "nope.json"))

    def test_stale_fingerprint(self):
        model = init_model(seed=0, **SMALL_MODEL)
        model.fingerprint = "stale"
        save_model(model, self.model_path)
        path = self.tmp / "eye.mtx"
        write_matrix_market(CsrMatrix.identity(3), path)
        with self.assertRaises(CommandError):
            self.call("predict", str(path), model=str(self.model_path))


@override_settings(AUTOAMG_THETA_GRID=COARSE_GRID)
class SensitivityCommandTests(PipelineTestCase):
    def test_matrix_sweep(self):
        out_dir = self.generate()
        output = self.tmp / "sweep.csv"
        self.call("sensitivity", matrix=str(out_dir / "matrices" / "m0001.mtx"), output=str(output))
        frame = pd.read_csv(output)
        self.assertEqual(len(frame), 10)
        self.assertEqual(frame["row_type"].tolist(), ["data"] * 9 + ["summary"])

    def test_two_grid_sweep_from_spec(self):
        spec = self.write_json(
            "boundary.json",
            {"dim": 2, "nx": 12, "ny": 12, "bx": 4, "by": 4, "M": 6, "seed": 0, "kappa_y_fixed": True},
        )
        out = self.call("sensitivity", spec=spec, tg=True, delta=3.0, out_dir=str(self.tmp))
        frame = pd.read_csv(self.tmp / "sensitivity" / "boundary_tg.csv")
        self.assertEqual(list(frame.columns), BOUNDARY_COLUMNS)
        self.assertEqual(len(frame), 9)
        self.assertIn("theta_star", out)

    def test_missing_input(self):
        with self.assertRaises(CommandError):
            self.call("sensitivity", matrix=str(self.tmp / "absent.mtx"))
        with self.assertRaises(CommandError):
            self.call("sensitivity")


@override_settings(AUTOAMG_THETA_GRID=COARSE_GRID)
class EndToEndDeterminismTests(PipelineTestCase):
    def run_pipeline(self, out_dir):
        self.generate(out_dir=out_dir)
        self.call("gridsearch", out_dir=str(out_dir))
        config = self.write_json("train.json", {"epochs": 4, "batch_size": 2, **SMALL_MODEL})
        self.call("train", out_dir=str(out_dir), config=config, seed=0)
        manifest = json.loads((out_dir / "manifest.json").read_text())
        grids = [
            pd.read_csv(out_dir / e["grid_csv"])[["theta", "iterations", "converged", "levels"]]
            for e in manifest["entries"]
        ]
        return manifest, grids, (out_dir / "training_log.csv").read_text()

    def test_rerun_reproduces_labels_and_curves(self):
        first = self.run_pipeline(self.tmp / "a")
        second = self.run_pipeline(self.tmp / "b")
        self.assertEqual(first[0], second[0])
        for a, b in zip(first[1], second[1]):
            pd.testing.assert_frame_equal(a, b)
        self.assertEqual(first[2], second[2])


def median_seconds(f, repeats=5):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        f()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


class InferenceOverheadTests(SimpleTestCase):
    @tag("slow")
    def test_inference_is_small_next_to_solve(self):
        # the largest 3D desk-scale matrix
        A = gen_diffusion(DiffusionSpec(dim=3, nx=16, ny=16, nz=16, bx=5, by=5, bz=5, M=5, seed=0)).A
        model = init_model(seed=0)
        theta = predict_theta(model, A)
        inference = median_seconds(lambda: predict_theta(model, A))
        _, solve = timed_solve(
            A, np.ones(A.n_rows), theta, SolverParams.from_settings(), AmgParams.from_settings(seed=0), 3
        )
        self.assertLess(inference, 0.05 * solve)


@override_settings(AUTOAMG_THETA_GRID=[0.05, 0.95, 0.05])
class EndToEndImprovementTests(PipelineTestCase):
    @tag("slow")
    def test_learned_theta_beats_fixed_default(self):
        config = {"count": 20, "dim": 3, "test_fraction": 0.25, "nx": [10, 12], "bx": [3, 4], "M": [3, 5]}
        out_dir = self.generate(config)
        self.call("gridsearch", out_dir=str(out_dir), threads=2)
        self.call("train", out_dir=str(out_dir), seed=0, threads=2)
        self.call("eval", out_dir=str(out_dir), defaults=[0.5], repeats=1, threads=2)

        table = pd.read_csv(out_dir / "eval_table.csv")
        overall = table[table["group"] == "all"].iloc[0]
        self.assertEqual(overall["count"], 5)
        self.assertLessEqual(overall["iter_auto_mean"], overall["iter_default_0.5"])
        self.assertLessEqual(overall["iter_auto_mean"] / overall["iter_opt_mean"], 3.0)
