"""Teacher registry and prediction aggregation.

All aggregation works on an optional leading batch axis: predictions are
(N, C) for one sample or (B, N, C) for a batch, task losses (N,) or (B, N).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from chorus.diagnostics import ChorusError
from chorus.model import MlpParameters, predict_proba
from chorus.numerics import EPS_LOG, as_prob_vector, clamp_probs


EPS_W = 1e-8


class WeightMode(str, Enum):
    INVERSE_LOSS = "inverse_loss"
    LITERAL_EQ1 = "literal_eq1"


@dataclass(frozen=True, eq=False)
class TeacherPredictionSet:
    predictions: np.ndarray
    task_losses: np.ndarray | None = None

    def __post_init__(self) -> None:
        preds = as_prob_vector(self.predictions)
        if preds.ndim not in (2, 3):
            raise ChorusError(
                code="class_count_mismatch",
                technical=f"predictions must be (N, C) or (B, N, C), got {preds.shape}",
            )
        if preds.shape[-2] < 2:
            raise ChorusError(
                code="too_few_teachers",
                technical=f"need at least 2 teachers, got {preds.shape[-2]}",
            )
        object.__setattr__(self, "predictions", preds)
        if self.task_losses is not None:
            losses = np.asarray(self.task_losses, dtype=np.float64)
            if losses.shape != preds.shape[:-1]:
                raise ChorusError(
                    code="shape_mismatch",
                    technical=f"task losses shape {losses.shape} does not match {preds.shape[:-1]}",
                )
            if not np.all(np.isfinite(losses)) or np.any(losses < 0.0):
                raise ChorusError(code="negative_loss", technical="task losses must be finite and >= 0")
            object.__setattr__(self, "task_losses", losses)

    @property
    def n_teachers(self) -> int:
        return int(self.predictions.shape[-2])

    @property
    def num_classes(self) -> int:
        return int(self.predictions.shape[-1])

    @property
    def batched(self) -> bool:
        return self.predictions.ndim == 3

    def __len__(self) -> int:
        return int(self.predictions.shape[0]) if self.batched else 1

    def take(self, index: object) -> TeacherPredictionSet:
        """Rows of a batched set (index array or slice)."""
        losses = None if self.task_losses is None else self.task_losses[index]
        return TeacherPredictionSet(predictions=self.predictions[index], task_losses=losses)


@dataclass(frozen=True, eq=False)
class EnsembleWeights:
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0.0) or np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-9):
            raise ChorusError(
                code="invalid_probabilities",
                technical="ensemble weights must be non-negative and sum to 1",
            )
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n_teachers: int, batch: int | None = None) -> EnsembleWeights:
        shape = (n_teachers,) if batch is None else (batch, n_teachers)
        return cls(np.full(shape, 1.0 / n_teachers))


def teacher_task_losses(predictions: object, label: object, eps: float = EPS_LOG) -> np.ndarray:
    """Cross-entropy of one-hot(label) against each teacher: -log(p_i[label])."""
    preds = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(label, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= preds.shape[-1]):
        raise ChorusError(
            code="class_count_mismatch",
            technical=f"label outside [0, {preds.shape[-1]})",
        )
    picked = np.take_along_axis(preds, labels[..., np.newaxis, np.newaxis], axis=-1)[..., 0]
    return -np.log(clamp_probs(picked, eps))


def correctness_weights(
    losses: object,
    mode: WeightMode | str = WeightMode.INVERSE_LOSS,
    eps_w: float = EPS_W,
) -> EnsembleWeights:
    """Per-sample teacher weights from their task losses.

    ``inverse_loss``: w_i proportional to 1/(L_i + eps_w), so a worse teacher counts less.
    ``literal_eq1``: w_i proportional to L_i, uniform when every loss is zero.
    """
    values = np.asarray(losses, dtype=np.float64)
    if values.shape[-1] < 2:
        raise ChorusError(code="too_few_teachers", technical=f"need at least 2 teachers, got {values.shape[-1]}")
    if np.any(values < 0.0) or not np.all(np.isfinite(values)):
        raise ChorusError(code="negative_loss", technical="task losses must be finite and >= 0")

    mode = WeightMode(mode)
    if mode is WeightMode.INVERSE_LOSS:
        raw = 1.0 / (values + eps_w)
    else:
        totals = values.sum(axis=-1, keepdims=True)
        raw = np.where(totals > 0.0, values, 1.0)
    return EnsembleWeights(raw / raw.sum(axis=-1, keepdims=True))


def weighted_ensemble(preds: TeacherPredictionSet, weights: EnsembleWeights) -> np.ndarray:
    if weights.weights.shape != preds.predictions.shape[:-1]:
        raise ChorusError(
            code="shape_mismatch",
            technical=f"weights shape {weights.weights.shape} does not match teachers {preds.predictions.shape[:-1]}",
        )
    return np.einsum("...n,...nc->...c", weights.weights, preds.predictions)


def uniform_ensemble(preds: TeacherPredictionSet) -> np.ndarray:
    return preds.predictions.mean(axis=-2)


def disagreement(preds: TeacherPredictionSet, eps: float = EPS_LOG) -> float | np.ndarray:
    """Mean KL divergence over all ordered teacher pairs i != j."""
    p = clamp_probs(preds.predictions, eps)
    logs = np.log(p)
    n = preds.n_teachers
    # kl[..., i, j] = KL(p_i || p_j); the diagonal is exactly zero
    kl = np.sum(p[..., :, np.newaxis, :] * (logs[..., :, np.newaxis, :] - logs[..., np.newaxis, :, :]), axis=-1)
    score = np.maximum(kl, 0.0).sum(axis=(-2, -1)) / (n * (n - 1))
    if np.ndim(score) == 0:
        return float(score)
    return score


class TeacherEnsemble:
    """The trained teachers, evaluated together."""

    def __init__(self, teachers: Sequence[MlpParameters], names: Sequence[str] | None = None) -> None:
        if len(teachers) < 2:
            raise ChorusError(code="too_few_teachers", technical=f"need at least 2 teachers, got {len(teachers)}")
        archs = {t.architecture for t in teachers}
        if len(archs) != 1:
            raise ChorusError(code="invalid_architecture", technical="all teachers must share one architecture")
        self.teachers = list(teachers)
        self.names = list(names) if names is not None else [f"teacher-{i}" for i in range(len(teachers))]

    def __len__(self) -> int:
        return len(self.teachers)

    @property
    def num_classes(self) -> int:
        return self.teachers[0].architecture.num_classes

    def probabilities(self, features: np.ndarray) -> np.ndarray:
        """Teacher soft labels with shape (B, N, C)."""
        return np.stack([predict_proba(t, features) for t in self.teachers], axis=1)

    def predict(self, features: np.ndarray, labels: np.ndarray | None = None) -> TeacherPredictionSet:
        probs = self.probabilities(features)
        losses = None if labels is None else teacher_task_losses(probs, labels)
        return TeacherPredictionSet(predictions=probs, task_losses=losses)

    def individual_accuracies(self, features: np.ndarray, labels: np.ndarray) -> list[float]:
        probs = self.probabilities(features)
        return [float(np.mean(np.argmax(probs[:, i], axis=-1) == labels)) for i in range(len(self))]

    def ensemble_accuracy(self, features: np.ndarray, labels: np.ndarray) -> float:
        preds = TeacherPredictionSet(predictions=self.probabilities(features))
        return float(np.mean(np.argmax(uniform_ensemble(preds), axis=-1) == labels))
