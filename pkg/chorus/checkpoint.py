"""JSON checkpoints for MLP parameters.

Floats are written with Python's ``repr`` (shortest decimal that round-trips
exactly), so ``load_checkpoint(save_checkpoint(x))`` is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from chorus.diagnostics import ChorusError
from chorus.model import MlpArchitecture, MlpParameters


FORMAT_VERSION = 1


@dataclass(frozen=True)
class CheckpointMetadata:
    seed: int
    epochs: int
    final_train_loss: float
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    role: str = "teacher"

    def to_dict(self) -> dict[str, object]:
        return {
            "seed": self.seed,
            "epochs": self.epochs,
            "final_train_loss": self.final_train_loss,
            "created_at": self.created_at,
            "role": self.role,
        }


@dataclass(eq=False)
class Checkpoint:
    parameters: MlpParameters
    metadata: CheckpointMetadata
    format_version: int = FORMAT_VERSION

    @property
    def architecture(self) -> MlpArchitecture:
        return self.parameters.architecture


def _layer_doc(params: MlpParameters) -> list[dict[str, object]]:
    return [
        {"weights": w.tolist(), "bias": b.tolist()}
        for w, b in zip(params.weights, params.biases)
    ]


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format_version": checkpoint.format_version,
        "architecture": checkpoint.architecture.to_dict(),
        "metadata": checkpoint.metadata.to_dict(),
        "layers": _layer_doc(checkpoint.parameters),
    }
    out.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return out


def _malformed(path: Path, detail: str) -> ChorusError:
    return ChorusError(code="checkpoint_malformed", technical=f"malformed checkpoint `{path}`: {detail}")


def _as_matrix(raw: object, shape: tuple[int, ...], layer: int, part: str) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise ChorusError(
            code="checkpoint_shape",
            technical=f"layer {layer} {part} is ragged or non-numeric; expected shape {shape}",
            where=f"layer {layer}",
        ) from None
    if arr.shape != shape:
        raise ChorusError(
            code="checkpoint_shape",
            technical=f"layer {layer} {part} has shape {arr.shape}, expected {shape}",
            where=f"layer {layer}",
        )
    return arr


def load_checkpoint(path: str | Path) -> Checkpoint:
    src = Path(path)
    if not src.is_file():
        raise ChorusError(code="missing_file", technical=f"file not found: `{src}`")
    try:
        doc = json.loads(src.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise _malformed(src, str(exc)) from None
    if not isinstance(doc, dict):
        raise _malformed(src, "top level must be an object")

    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ChorusError(
            code="checkpoint_version",
            technical=f"checkpoint format_version {version!r} is not supported (expected {FORMAT_VERSION})",
        )

    try:
        arch = MlpArchitecture.from_dict(doc["architecture"])
        meta_raw = doc["metadata"]
        metadata = CheckpointMetadata(
            seed=int(meta_raw["seed"]),
            epochs=int(meta_raw["epochs"]),
            final_train_loss=float(meta_raw["final_train_loss"]),
            created_at=str(meta_raw["created_at"]),
            role=str(meta_raw.get("role", "teacher")),
        )
        layers = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise _malformed(src, f"missing or invalid field {exc}") from None

    shapes = arch.layer_shapes()
    if not isinstance(layers, list) or len(layers) != len(shapes):
        raise ChorusError(
            code="checkpoint_shape",
            technical=f"expected {len(shapes)} layers, found {len(layers) if isinstance(layers, list) else 'none'}",
        )
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for i, ((fan_in, fan_out), layer) in enumerate(zip(shapes, layers)):
        if not isinstance(layer, dict) or "weights" not in layer or "bias" not in layer:
            raise _malformed(src, f"layer {i} needs `weights` and `bias`")
        weights.append(_as_matrix(layer["weights"], (fan_in, fan_out), i, "weights"))
        biases.append(_as_matrix(layer["bias"], (fan_out,), i, "bias"))

    params = MlpParameters(weights=weights, biases=biases, architecture=arch)
    if not params.is_finite():
        raise _malformed(src, "parameters contain non-finite values")
    return Checkpoint(parameters=params, metadata=metadata, format_version=version)
