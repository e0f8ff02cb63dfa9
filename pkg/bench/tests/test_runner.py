import sys
import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

sys.path.append(str(Path(__file__).parent.parent.parent))

from data.design_gen import cosine_transform
from data.errors import ConfigMismatchError, GPFitError
from data.store import KEY, ResultsStore, read_results
from data.testbed import RegistryConfig, SizeClass, build_registry
from model.emulator import GPSettings
from model.runner import (
    StudyConfig,
    base_design,
    config_hash,
    derive_cell_seed,
    evaluate_cell,
    fit_failed_count,
    resume,
    run_cell,
    run_study,
)


def tiny_config(out, **changes):
    values = {
        "registry": RegistryConfig(families=["additive"], variants=["A"], dimensions=[2], holdout_size=50),
        "multipliers": [5],
        "replicates": 2,
        "maximin_budget": 20,
        "gp": GPSettings(n_starts=2, max_evals=30),
        "out": str(out),
    }
    values.update(changes)
    return StudyConfig(**values)


class TestCellSeeds(unittest.TestCase):

    def test_stable(self):
        a = derive_cell_seed(0, "additive-A-2", "M1", "5d", 3)
        self.assertEqual(a, derive_cell_seed(0, "additive-A-2", "M1", "5d", 3))
        self.assertTrue(0 <= a < 2**64)
        self.assertEqual(a, derive_cell_seed(0, "additive-A-2", "M1", SizeClass(5), 3))

    def test_no_collisions(self):
        seeds = {
            derive_cell_seed(7, f"problem-{p}", f"M{m}", "10d", r)
            for p in range(10)
            for m in range(1, 8)
            for r in range(1429)
        }
        self.assertEqual(len(seeds), 10 * 7 * 1429)

    def test_master_seed_changes_everything(self):
        for replicate in range(200):
            a = derive_cell_seed(0, "ridge-B-4", "M5", "15d", replicate)
            b = derive_cell_seed(1, "ridge-B-4", "M5", "15d", replicate)
            self.assertNotEqual(a, b)


class TestConfig(unittest.TestCase):

    def test_defaults_reproduce_full_study(self):
        config = StudyConfig()
        self.assertEqual(config.methods, ["M1", "M2", "M3", "M4", "M5", "M6", "M7"])
        self.assertEqual([s.label for s in config.size_classes], ["5d", "10d", "15d"])
        self.assertEqual(config.replicates, 50)
        cells = 24 * len(config.methods) * len(config.multipliers) * config.replicates
        self.assertEqual(cells, 25200)

    def test_hash_ignores_grid_extent(self):
        a = tiny_config("x")
        self.assertEqual(config_hash(a), config_hash(a.model_copy(update={"replicates": 9, "parallel": 4})))
        self.assertNotEqual(config_hash(a), config_hash(a.model_copy(update={"master_seed": 1})))

    def test_invalid(self):
        with self.assertRaises(ValueError):
            StudyConfig(methods=["M8"])
        with self.assertRaises(ValueError):
            StudyConfig(replicates=0)

    def test_zero_correlation_needs_two_dimensions(self):
        one_dimension = RegistryConfig(families=["additive"], variants=["A"], dimensions=[1, 2])
        for method in ("M3", "M5"):
            with self.assertRaises(ValueError):
                StudyConfig(registry=one_dimension, methods=["M1", method])
        config = StudyConfig(registry=one_dimension, methods=["M1", "M2", "M4", "M6", "M7"])
        self.assertEqual(config.registry.dimensions, [1, 2])

    def test_zero_correlation_needs_three_points(self):
        with self.assertRaises(ValueError):
            StudyConfig(registry=RegistryConfig(dimensions=[2]), methods=["M3"], multipliers=[1])


class TestBaseDesign(unittest.TestCase):

    def test_cosine_methods_share_parent_seed(self):
        config = tiny_config("x")
        problem = build_registry(config.registry, 0)[0]
        size = SizeClass(5)
        m2 = base_design(config, problem, "M2", size)
        m4 = base_design(config, problem, "M4", size)
        np.testing.assert_array_equal(m4.points, cosine_transform(m2).points)


class TestRunStudy(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_cardinality_and_manifest(self):
        store = run_study(tiny_config(self.root / "a", replicates=1))
        frame = store.frame
        self.assertEqual(len(frame), 7 * 2)
        self.assertEqual((frame["metric"] == "rmse").sum(), 7)
        self.assertFalse(frame.duplicated(subset=KEY).any())
        self.assertTrue(set(frame["status"]) <= {"ok", "fit_failed"})

        manifest = store.read_manifest()
        self.assertEqual(manifest["config_hash"], config_hash(tiny_config(self.root / "a", replicates=1)))
        self.assertEqual(manifest["counts"]["cells"], 7)
        self.assertEqual(manifest["registry"][0]["id"], "additive-A-2")
        self.assertTrue((self.root / "a" / "registry.json").exists())

    def test_canonical_order(self):
        frame = run_study(tiny_config(self.root / "a")).frame
        self.assertEqual(list(frame["method"].iloc[::4]), ["M1", "M2", "M3", "M4", "M5", "M6", "M7"])
        self.assertEqual(list(frame["metric"].iloc[:2]), ["rmse", "ame"])
        self.assertEqual(list(frame["replicate"].iloc[:4]), [0, 0, 1, 1])

    def test_rmse_not_above_ame(self):
        frame = run_study(tiny_config(self.root / "a")).frame
        ok = frame[frame["status"] == "ok"]
        rmse = ok[ok["metric"] == "rmse"]["value"].to_numpy()
        ame = ok[ok["metric"] == "ame"]["value"].to_numpy()
        self.assertTrue(np.all(rmse <= ame + 1e-15))

    def test_deterministic_across_runs_and_parallelism(self):
        run_study(tiny_config(self.root / "a"))
        run_study(tiny_config(self.root / "b"))
        run_study(tiny_config(self.root / "c", parallel=2, batch_size=2))
        reference = (self.root / "a" / "results.csv").read_bytes()
        self.assertEqual(reference, (self.root / "b" / "results.csv").read_bytes())
        self.assertEqual(reference, (self.root / "c" / "results.csv").read_bytes())

        manifest = (self.root / "a" / "manifest.json").read_bytes()
        self.assertEqual(manifest, (self.root / "b" / "manifest.json").read_bytes())
        self.assertEqual(manifest, (self.root / "c" / "manifest.json").read_bytes())
        content = json.loads(manifest)
        for name in ("out", "parallel", "batch_size"):
            self.assertNotIn(name, content["config"])
        self.assertNotIn("created_at", content)

    def test_cell_independence(self):
        config = tiny_config(self.root / "a")
        frame = run_study(config).frame
        problem = build_registry(config.registry, config.master_seed)[0]
        for method, replicate in (("M2", 1), ("M4", 0), ("M6", 1)):
            record = run_cell(config, problem, method, "5d", replicate)
            rows = frame[
                (frame["method"] == method) & (frame["replicate"] == replicate) & (frame["metric"] == "rmse")
            ]
            self.assertEqual(rows["value"].iloc[0], record.rmse)
            self.assertEqual(rows["trivial_value"].iloc[0], record.rmse_trivial)

    def test_resume_after_interruption(self):
        full = self.root / "full"
        partial = self.root / "partial"
        run_study(tiny_config(full))
        run_study(tiny_config(partial))

        # interruption au milieu d'une ligne
        content = (partial / "results.csv").read_bytes()
        (partial / "results.csv").write_bytes(content[: len(content) // 2])

        resume(partial, tiny_config(partial))
        self.assertEqual((full / "results.csv").read_bytes(), (partial / "results.csv").read_bytes())

    def test_resume_complete_store_is_noop(self):
        config = tiny_config(self.root / "a")
        run_study(config)
        before = (self.root / "a" / "results.csv").read_bytes()
        with patch("model.runner.evaluate_cell") as mock_evaluate:
            resume(self.root / "a", config)
        mock_evaluate.assert_not_called()
        self.assertEqual(before, (self.root / "a" / "results.csv").read_bytes())

    def test_resume_grows_replicates(self):
        run_study(tiny_config(self.root / "a", replicates=1))
        with patch("model.runner.evaluate_cell", wraps=evaluate_cell) as spy:
            store = resume(self.root / "a", tiny_config(self.root / "a", replicates=2))
        self.assertEqual(spy.call_count, 7)
        self.assertTrue(all(call.args[5] == 1 for call in spy.call_args_list))
        run_study(tiny_config(self.root / "b", replicates=2))
        self.assertEqual(
            (self.root / "b" / "results.csv").read_bytes(),
            store.results_path.read_bytes(),
        )

    def test_resume_refuses_other_config(self):
        run_study(tiny_config(self.root / "a", replicates=1))
        with self.assertRaises(ConfigMismatchError) as ctx:
            resume(self.root / "a", tiny_config(self.root / "a", replicates=1, master_seed=5))
        self.assertIn("master_seed", ctx.exception.diff)

    @patch("model.runner.fit_gp", side_effect=GPFitError("non SPD"))
    def test_fit_failures_recorded_not_raised(self, mock_fit):
        store = run_study(tiny_config(self.root / "a"))
        self.assertEqual(fit_failed_count(store), 7 * 2)
        self.assertTrue(store.frame["value"].isna().all())
        self.assertTrue((store.frame["trivial_value"] > 0).all())

    def test_degenerate_problem(self):
        registry = RegistryConfig(families=["constant"], variants=["A"], dimensions=[2], holdout_size=20)
        store = run_study(tiny_config(self.root / "a", registry=registry, replicates=1, methods=["M1", "M6"]))
        self.assertEqual(set(store.frame["status"]), {"degenerate"})
        self.assertEqual(fit_failed_count(store), 0)

    def test_debug_model_summaries(self):
        run_study(tiny_config(self.root / "a", replicates=1, methods=["M1"], debug_models=True))
        files = list((self.root / "a" / "models").glob("*.json"))
        self.assertEqual(len(files), 1)
        with open(files[0], "r", encoding="utf-8") as f:
            self.assertIn("corr_lengths", json.load(f))

    def test_count_conservation(self):
        store = run_study(tiny_config(self.root / "a", methods=["M1", "M7"]))
        frame = read_results(store.results_path)
        rmse = frame[frame["metric"] == "rmse"]
        self.assertEqual(len(rmse), 2 * 2)
        self.assertEqual(len(frame), 2 * len(rmse))
        self.assertEqual(len(ResultsStore.load(self.root / "a")), len(frame))

    def test_malformed_rows_reported(self):
        path = self.root / "results.csv"
        path.write_text(
            "problem_id,method,size_class,replicate,metric,value,trivial_value,status,wall_time\n"
            "additive-A-2,M1,5d,0,rmse,0.1,0.5,ok,\n"
            "additive-A-2,M1,5d,0,ame,0.3,0.9,ok,,,extra,champs\n"
            "additive-A-2,M1,5d,1,rmse,0.2,0.5,o,\n"
            "additive-A-2,M1,5d,1,ame,0.4,0.9,ok,\n",
            encoding="utf-8",
        )
        with self.assertLogs("data.store", level="WARNING") as logs:
            frame = read_results(path)
        self.assertEqual(len(frame), 2)
        self.assertIn("2 lignes", logs.output[0])


if __name__ == "__main__":
    unittest.main()
