from __future__ import annotations

import json
import tempfile
import unittest
from pathlib import Path

from chorus.config import RunConfig, apply_overrides, config_from_mapping, config_keys, load_config
from chorus.diagnostics import ChorusAggregateError, ChorusError
from chorus.distill import CombinePolicy
from chorus.ensemble import WeightMode


class RunConfigTests(unittest.TestCase):
    def test_defaults(self) -> None:
        cfg = RunConfig()
        self.assertEqual(cfg.n_teachers, 5)
        self.assertEqual(cfg.batch_size, 16)
        self.assertEqual(cfg.lam, 10.0)
        self.assertEqual(cfg.labeled_fraction, 0.5)
        distill = cfg.distill_config()
        self.assertIs(distill.weight_mode, WeightMode.INVERSE_LOSS)
        self.assertIs(distill.combine_policy, CombinePolicy.SUM)
        self.assertEqual(cfg.architecture().layer_sizes(), [2, 32, 3])
        self.assertEqual(cfg.teacher_training().epochs, 30)

    def test_snapshot_uses_file_keys(self) -> None:
        snap = RunConfig().snapshot()
        self.assertEqual(sorted(snap), sorted(config_keys()))
        self.assertEqual(snap["lambda"], 10.0)
        self.assertEqual(snap["seeds"], [0, 1, 2, 3, 4])
        json.dumps(snap)


class LoadConfigTests(unittest.TestCase):
    def test_toml_file(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.toml"
            path.write_text(
                'master_seed = 3\nseeds = [1, 2]\nhidden_dims = [16, 8]\nlambda = 5\ncombine_policy = "interleave"\n',
                encoding="utf-8",
            )
            cfg = load_config(path)
        self.assertEqual(cfg.master_seed, 3)
        self.assertEqual(cfg.seeds, (1, 2))
        self.assertEqual(cfg.hidden_dims, (16, 8))
        self.assertEqual(cfg.lam, 5.0)
        self.assertEqual(cfg.combine_policy, "interleave")

    def test_json_file(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.json"
            path.write_text(json.dumps({"n_teachers": 3, "enable_teacher_weighting": False}), encoding="utf-8")
            cfg = load_config(path)
        self.assertEqual(cfg.n_teachers, 3)
        self.assertFalse(cfg.enable_teacher_weighting)

    def test_misspelled_key_is_rejected_with_hint(self) -> None:
        with self.assertRaises(ChorusAggregateError) as ctx:
            config_from_mapping({"n_teacher": 3})
        err = ctx.exception.errors[0]
        self.assertEqual(err.code, "unknown_config_key")
        self.assertIn("Did you mean `n_teachers`?", err.technical)

    def test_field_name_for_lambda_is_not_a_key(self) -> None:
        with self.assertRaises(ChorusAggregateError):
            config_from_mapping({"lam": 1.0})

    def test_all_bad_values_reported_together(self) -> None:
        with self.assertRaises(ChorusAggregateError) as ctx:
            config_from_mapping({"lr": "fast", "batch_size": 0, "lambda": -1})
        codes = [e.code for e in ctx.exception.errors]
        self.assertEqual(codes, ["invalid_config_value"])
        with self.assertRaises(ChorusAggregateError) as ctx:
            config_from_mapping({"batch_size": 0, "lambda": -1})
        self.assertEqual(len(ctx.exception.errors), 2)

    def test_negative_seeds_rejected(self) -> None:
        with self.assertRaises(ChorusAggregateError) as ctx:
            config_from_mapping({"master_seed": -1, "seeds": [0, -2]})
        self.assertEqual(len(ctx.exception.errors), 2)
        self.assertTrue(all(e.code == "invalid_config_value" for e in ctx.exception.errors))
        with self.assertRaises(ChorusAggregateError):
            apply_overrides(RunConfig(), {"master_seed": "-3"})

    def test_missing_and_unsupported_files(self) -> None:
        with self.assertRaises(ChorusError) as ctx:
            load_config("missing.toml")
        self.assertEqual(ctx.exception.code, "missing_file")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.yaml"
            path.write_text("a: 1\n", encoding="utf-8")
            with self.assertRaises(ChorusError) as ctx:
                load_config(path)
        self.assertEqual(ctx.exception.code, "config_format")


class OverrideTests(unittest.TestCase):
    def test_text_values_are_parsed(self) -> None:
        cfg = apply_overrides(
            RunConfig(),
            {"lambda": "2.5", "seeds": "7,8", "loss_log": "true", "hidden_dims": "8,8", "data_path": "d.csv"},
        )
        self.assertEqual(cfg.lam, 2.5)
        self.assertEqual(cfg.seeds, (7, 8))
        self.assertTrue(cfg.loss_log)
        self.assertEqual(cfg.hidden_dims, (8, 8))
        self.assertEqual(cfg.data_path, "d.csv")

    def test_bad_override(self) -> None:
        with self.assertRaises(ChorusAggregateError) as ctx:
            apply_overrides(RunConfig(), {"batch_size": "many", "optimizr": "sgd"})
        codes = sorted(e.code for e in ctx.exception.errors)
        self.assertEqual(codes, ["invalid_config_value", "unknown_config_key"])


if __name__ == "__main__":
    unittest.main()
