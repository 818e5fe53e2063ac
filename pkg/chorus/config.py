"""Run configuration: one flat, fully defaulted record loaded from TOML or JSON."""

from __future__ import annotations

import json
import tomllib
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from chorus.diagnostics import ChorusAggregateError, ChorusError, did_you_mean
from chorus.distill import CombinePolicy, DistillConfig
from chorus.ensemble import WeightMode
from chorus.model import Activation, MlpArchitecture
from chorus.optim import OPTIMIZERS
from chorus.training import TrainingConfig


LAYOUTS = ("grid", "ring")


@dataclass(frozen=True)
class RunConfig:
    # seeds
    master_seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    # data
    num_classes: int = 3
    layout: str = "grid"
    spacing: float = 3.0
    cov_scale: float = 0.5
    train_per_class: int = 1334
    test_per_class: int = 334
    data_path: str | None = None
    test_path: str | None = None
    labeled_fraction: float = 0.5
    val_fraction: float = 0.0
    test_fraction: float = 0.0
    validation_fraction: float = 0.1
    include_unlabeled_in_teachers: bool = False
    # model
    hidden_dims: tuple[int, ...] = (32,)
    activation: str = "relu"
    n_teachers: int = 5
    # optimization
    teacher_epochs: int = 30
    student_epochs: int = 30
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # distillation
    lam: float = 10.0
    weight_mode: str = "inverse_loss"
    enable_teacher_weighting: bool = True
    enable_labeled_loss_weighting: bool = True
    enable_disagreement_weighting: bool = True
    combine_policy: str = "sum"
    eps_log: float = 1e-12
    eps_w: float = 1e-8
    lambda_values: tuple[float, ...] = (0.0, 1.0, 5.0, 10.0, 15.0, 25.0, 50.0)
    # output
    output_dir: str = "runs"
    loss_log: bool = False

    def distill_config(self) -> DistillConfig:
        return DistillConfig(
            lam=self.lam,
            weight_mode=WeightMode(self.weight_mode),
            enable_teacher_weighting=self.enable_teacher_weighting,
            enable_labeled_loss_weighting=self.enable_labeled_loss_weighting,
            enable_disagreement_weighting=self.enable_disagreement_weighting,
            combine_policy=CombinePolicy(self.combine_policy),
            eps_log=self.eps_log,
            eps_w=self.eps_w,
        )

    def architecture(self, input_dim: int = 2, num_classes: int | None = None) -> MlpArchitecture:
        return MlpArchitecture(
            input_dim=input_dim,
            hidden_dims=self.hidden_dims,
            num_classes=num_classes or self.num_classes,
            activation=Activation(self.activation),
        )

    def _training(self, epochs: int) -> TrainingConfig:
        return TrainingConfig(
            epochs=epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
        )

    def teacher_training(self) -> TrainingConfig:
        return self._training(self.teacher_epochs)

    def student_training(self) -> TrainingConfig:
        return self._training(self.student_epochs)

    def snapshot(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[config_key(f.name)] = list(value) if isinstance(value, tuple) else value
        return out


FIELD_KEYS = {"lam": "lambda"}
KEY_FIELDS = {key: name for name, key in FIELD_KEYS.items()}


def config_key(field_name: str) -> str:
    return FIELD_KEYS.get(field_name, field_name)


def field_name(key: str) -> str:
    return KEY_FIELDS.get(key, key)


def config_keys() -> list[str]:
    return [config_key(f.name) for f in fields(RunConfig)]


def field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in fields(RunConfig)}


def _bad(key: str, detail: str) -> ChorusError:
    return ChorusError(code="invalid_config_value", technical=f"`{key}`: {detail}")


def _coerce(key: str, kind: str, value: Any) -> Any:
    if kind == "bool":
        if isinstance(value, bool):
            return value
        raise _bad(key, f"expected true/false, got {value!r}")
    if kind == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise _bad(key, f"expected an integer, got {value!r}")
    if kind == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise _bad(key, f"expected a number, got {value!r}")
    if kind == "str":
        if isinstance(value, str):
            return value
        raise _bad(key, f"expected a string, got {value!r}")
    if kind == "str | None":
        if value is None or isinstance(value, str):
            return value or None
        raise _bad(key, f"expected a path string, got {value!r}")
    if kind.startswith("tuple["):
        inner = "int" if kind.startswith("tuple[int") else "float"
        if not isinstance(value, (list, tuple)):
            raise _bad(key, f"expected a list, got {value!r}")
        return tuple(_coerce(key, inner, item) for item in value)
    raise _bad(key, f"unsupported field type {kind}")


def _parse_text(key: str, kind: str, text: str) -> Any:
    """Turn a command-line string into a value of the field's type."""
    raw = text.strip()
    try:
        if kind == "bool":
            lowered = raw.lower()
            if lowered in {"true", "1", "yes", "on"}:
                return True
            if lowered in {"false", "0", "no", "off"}:
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "str | None":
            return raw or None
        if kind.startswith("tuple["):
            parts = [p for p in raw.split(",") if p.strip()]
            inner = int if kind.startswith("tuple[int") else float
            return tuple(inner(p) for p in parts)
    except ValueError:
        raise _bad(key, f"cannot parse {text!r} as {kind}") from None
    raise _bad(key, f"unsupported field type {kind}")


def _check_ranges(cfg: RunConfig) -> list[ChorusError]:
    errors: list[ChorusError] = []

    def need(ok: bool, key: str, detail: str) -> None:
        if not ok:
            errors.append(_bad(key, detail))

    need(cfg.num_classes >= 2, "num_classes", "must be >= 2")
    need(cfg.layout in LAYOUTS, "layout", f"must be one of {', '.join(LAYOUTS)}")
    need(cfg.spacing > 0, "spacing", "must be > 0")
    need(cfg.cov_scale > 0, "cov_scale", "must be > 0")
    need(cfg.train_per_class >= 1, "train_per_class", "must be >= 1")
    need(cfg.test_per_class >= 1, "test_per_class", "must be >= 1")
    need(0.0 < cfg.labeled_fraction <= 1.0, "labeled_fraction", "must lie in (0, 1]")
    for key in ("val_fraction", "test_fraction"):
        need(0.0 <= getattr(cfg, key) <= 1.0, key, "must lie in [0, 1]")
    need(0.0 <= cfg.validation_fraction < 1.0, "validation_fraction", "must lie in [0, 1)")
    need(all(h >= 1 for h in cfg.hidden_dims), "hidden_dims", "layer sizes must be >= 1")
    need(cfg.activation in {a.value for a in Activation}, "activation", "must be relu or tanh")
    need(cfg.n_teachers >= 2, "n_teachers", "an ensemble needs at least 2 teachers")
    need(cfg.teacher_epochs >= 1, "teacher_epochs", "must be >= 1")
    need(cfg.student_epochs >= 1, "student_epochs", "must be >= 1")
    need(cfg.optimizer in OPTIMIZERS, "optimizer", f"must be one of {', '.join(OPTIMIZERS)}")
    need(cfg.lr > 0, "lr", "must be > 0")
    need(cfg.batch_size >= 1, "batch_size", "must be >= 1")
    need(0.0 <= cfg.beta1 < 1.0 and 0.0 <= cfg.beta2 < 1.0, "beta1/beta2", "must lie in [0, 1)")
    need(cfg.adam_eps > 0, "adam_eps", "must be > 0")
    need(cfg.lam >= 0, "lambda", "must be >= 0")
    need(cfg.weight_mode in {m.value for m in WeightMode}, "weight_mode", "must be inverse_loss or literal_eq1")
    need(cfg.combine_policy in {p.value for p in CombinePolicy}, "combine_policy", "must be sum or interleave")
    need(cfg.eps_log > 0 and cfg.eps_w > 0, "eps_log/eps_w", "must be > 0")
    need(len(cfg.lambda_values) > 0, "lambda_values", "must not be empty")
    need(all(v >= 0 for v in cfg.lambda_values), "lambda_values", "must be >= 0")
    need(len(cfg.seeds) > 0, "seeds", "must not be empty")
    need(all(s >= 0 for s in cfg.seeds), "seeds", "must be >= 0")
    need(cfg.master_seed >= 0, "master_seed", "must be >= 0")
    return errors


def config_from_mapping(raw: Mapping[str, Any], base: RunConfig | None = None) -> RunConfig:
    """Build a RunConfig from already-typed values (a parsed TOML/JSON document)."""
    base = base or RunConfig()
    kinds = field_types()
    keys = config_keys()
    errors: list[ChorusError] = []
    updates: dict[str, Any] = {}
    for key, value in raw.items():
        name = field_name(key)
        if name not in kinds or key in FIELD_KEYS:
            errors.append(
                ChorusError(code="unknown_config_key", technical=f"unknown config key `{key}`.{did_you_mean(key, keys)}")
            )
            continue
        try:
            updates[name] = _coerce(key, kinds[name], value)
        except ChorusError as err:
            errors.append(err)
    if errors:
        raise ChorusAggregateError(errors)
    return validate(replace(base, **updates))


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, str]) -> RunConfig:
    """Apply ``key -> text`` overrides coming from the command line."""
    kinds = field_types()
    keys = config_keys()
    errors: list[ChorusError] = []
    updates: dict[str, Any] = {}
    for key, text in overrides.items():
        name = field_name(key)
        if name not in kinds or key in FIELD_KEYS:
            errors.append(
                ChorusError(code="unknown_config_key", technical=f"unknown config key `{key}`.{did_you_mean(key, keys)}")
            )
            continue
        try:
            updates[name] = _parse_text(key, kinds[name], text)
        except ChorusError as err:
            errors.append(err)
    if errors:
        raise ChorusAggregateError(errors)
    return validate(replace(cfg, **updates))


def validate(cfg: RunConfig) -> RunConfig:
    errors = _check_ranges(cfg)
    if errors:
        raise ChorusAggregateError(errors)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    src = Path(path)
    if not src.is_file():
        raise ChorusError(code="missing_file", technical=f"config file not found: `{src}`")
    suffix = src.suffix.lower()
    try:
        if suffix == ".toml":
            with src.open("rb") as handle:
                raw = tomllib.load(handle)
        elif suffix == ".json":
            raw = json.loads(src.read_text(encoding="utf-8"))
        else:
            raise ChorusError(code="config_format", technical=f"unsupported config extension `{src.suffix}`")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ChorusError(code="config_format", technical=f"cannot parse `{src}`: {exc}") from None
    if not isinstance(raw, dict):
        raise ChorusError(code="config_format", technical=f"`{src}` must hold a table of key = value pairs")
    return config_from_mapping(raw)
