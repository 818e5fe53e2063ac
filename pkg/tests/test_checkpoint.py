from __future__ import annotations

import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from chorus.checkpoint import FORMAT_VERSION, Checkpoint, CheckpointMetadata, load_checkpoint, save_checkpoint
from chorus.diagnostics import ChorusError
from chorus.model import MlpArchitecture, init_parameters


def _checkpoint() -> Checkpoint:
    params = init_parameters(MlpArchitecture(input_dim=2, hidden_dims=(5, 4), num_classes=3), seed=12)
    params.biases[0][:] = np.random.default_rng(1).normal(size=5) / 3.0
    return Checkpoint(parameters=params, metadata=CheckpointMetadata(seed=12, epochs=3, final_train_loss=0.123456789))


class CheckpointTests(unittest.TestCase):
    def test_round_trip_is_bit_exact(self) -> None:
        ckpt = _checkpoint()
        with tempfile.TemporaryDirectory() as tmp:
            loaded = load_checkpoint(save_checkpoint(Path(tmp) / "t.json", ckpt))
        self.assertEqual(loaded.architecture, ckpt.architecture)
        for a, b in zip(loaded.parameters.arrays(), ckpt.parameters.arrays()):
            self.assertEqual(a.tobytes(), b.tobytes())
        self.assertEqual(loaded.metadata, ckpt.metadata)

    def test_future_version_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "t.json", _checkpoint())
            doc = json.loads(path.read_text(encoding="utf-8"))
            doc["format_version"] = FORMAT_VERSION + 1
            path.write_text(json.dumps(doc), encoding="utf-8")
            with self.assertRaises(ChorusError) as ctx:
                load_checkpoint(path)
        self.assertEqual(ctx.exception.code, "checkpoint_version")

    def test_truncated_layer_names_layer(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "t.json", _checkpoint())
            doc = json.loads(path.read_text(encoding="utf-8"))
            doc["layers"][1]["weights"] = doc["layers"][1]["weights"][:-1]
            path.write_text(json.dumps(doc), encoding="utf-8")
            with self.assertRaises(ChorusError) as ctx:
                load_checkpoint(path)
        self.assertEqual(ctx.exception.code, "checkpoint_shape")
        self.assertEqual(ctx.exception.where, "layer 1")

    def test_malformed_document(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "t.json"
            path.write_text("{not json", encoding="utf-8")
            with self.assertRaises(ChorusError) as ctx:
                load_checkpoint(path)
            self.assertEqual(ctx.exception.code, "checkpoint_malformed")
            path.write_text(json.dumps({"format_version": FORMAT_VERSION}), encoding="utf-8")
            with self.assertRaises(ChorusError) as ctx:
                load_checkpoint(path)
            self.assertEqual(ctx.exception.code, "checkpoint_malformed")

    def test_missing_file(self) -> None:
        with self.assertRaises(ChorusError) as ctx:
            load_checkpoint("/nonexistent/teacher-0.json")
        self.assertEqual(ctx.exception.code, "missing_file")


if __name__ == "__main__":
    unittest.main()
