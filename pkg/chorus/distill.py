"""Distillation objectives for labeled and unlabeled samples.

Labeled:   L = w_lab * L_d(weighted ensemble, student) + L_s,  w_lab = 1 / (1 + mean_i L_t_i)
Unlabeled: L = (1 + lam * L_p) * L_d(uniform ensemble, student)

Teacher predictions, ``w_lab`` and the disagreement factor are constants with
respect to the student, so the gradient w.r.t. student logits is
``w * (s * sum(t) - t)`` plus ``s - onehot(y)`` for the task term.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from chorus.diagnostics import ChorusError
from chorus.ensemble import (
    EPS_W,
    EnsembleWeights,
    TeacherPredictionSet,
    WeightMode,
    correctness_weights,
    disagreement,
    uniform_ensemble,
    weighted_ensemble,
)
from chorus.numerics import EPS_LOG, cross_entropy, one_hot


class CombinePolicy(str, Enum):
    SUM = "sum"
    INTERLEAVE = "interleave"


@dataclass(frozen=True)
class DistillConfig:
    lam: float = 10.0
    weight_mode: WeightMode = WeightMode.INVERSE_LOSS
    enable_teacher_weighting: bool = True
    enable_labeled_loss_weighting: bool = True
    enable_disagreement_weighting: bool = True
    combine_policy: CombinePolicy = CombinePolicy.SUM
    eps_log: float = EPS_LOG
    eps_w: float = EPS_W

    def __post_init__(self) -> None:
        object.__setattr__(self, "weight_mode", WeightMode(self.weight_mode))
        object.__setattr__(self, "combine_policy", CombinePolicy(self.combine_policy))
        if not self.lam >= 0.0:
            raise ChorusError(code="invalid_lambda", technical=f"lambda must be >= 0, got {self.lam}")

    def plain(self) -> DistillConfig:
        """Same config with every weighting mechanism switched off."""
        return replace(
            self,
            enable_teacher_weighting=False,
            enable_labeled_loss_weighting=False,
            enable_disagreement_weighting=False,
        )

    def to_dict(self) -> dict[str, object]:
        return {
            "lambda": self.lam,
            "weight_mode": self.weight_mode.value,
            "enable_teacher_weighting": self.enable_teacher_weighting,
            "enable_labeled_loss_weighting": self.enable_labeled_loss_weighting,
            "enable_disagreement_weighting": self.enable_disagreement_weighting,
            "combine_policy": self.combine_policy.value,
            "eps_log": self.eps_log,
            "eps_w": self.eps_w,
        }


@dataclass(frozen=True)
class LossBreakdown:
    kind: str
    distill_loss: float
    total: float
    teacher_losses: tuple[float, ...] | None = None
    teacher_weights: tuple[float, ...] | None = None
    student_task_loss: float | None = None
    labeled_weight: float | None = None
    disagreement: float | None = None
    disagreement_factor: float | None = None

    def reconstruct_total(self) -> float:
        if self.kind == "labeled":
            return self.labeled_weight * self.distill_loss + self.student_task_loss
        return self.disagreement_factor * self.distill_loss

    def to_json(self) -> dict[str, object]:
        return {
            "kind": self.kind,
            "teacher_losses": None if self.teacher_losses is None else list(self.teacher_losses),
            "teacher_weights": None if self.teacher_weights is None else list(self.teacher_weights),
            "student_task_loss": self.student_task_loss,
            "distill_loss": self.distill_loss,
            "disagreement": self.disagreement,
            "labeled_weight": self.labeled_weight,
            "disagreement_factor": self.disagreement_factor,
            "total": self.total,
        }


def _tuple(row: np.ndarray | None) -> tuple[float, ...] | None:
    return None if row is None else tuple(float(v) for v in row)


def _item(values: np.ndarray | None, i: int) -> float | None:
    return None if values is None else float(values[i])


@dataclass(frozen=True, eq=False)
class BatchLoss:
    """Per-sample loss terms for one batch, plus what the logit gradient needs."""

    kind: str
    student_probs: np.ndarray
    targets: np.ndarray
    distill: np.ndarray
    distill_weights: np.ndarray
    totals: np.ndarray
    labels: np.ndarray | None = None
    teacher_losses: np.ndarray | None = None
    teacher_weights: np.ndarray | None = None
    student_task: np.ndarray | None = None
    disagreement: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.totals.shape[0])

    def mean(self) -> float:
        return float(np.mean(self.totals)) if len(self) else 0.0

    def logit_gradient(self) -> np.ndarray:
        """Gradient of the batch-mean total w.r.t. each row of student logits."""
        per_sample = student_logit_gradient(self.student_probs, self.targets, self.distill_weights, self.labels)
        return per_sample / max(len(self), 1)

    def breakdown(self, i: int) -> LossBreakdown:
        labeled = self.kind == "labeled"
        return LossBreakdown(
            kind=self.kind,
            distill_loss=float(self.distill[i]),
            total=float(self.totals[i]),
            teacher_losses=None if self.teacher_losses is None else _tuple(self.teacher_losses[i]),
            teacher_weights=None if self.teacher_weights is None else _tuple(self.teacher_weights[i]),
            student_task_loss=_item(self.student_task, i),
            labeled_weight=float(self.distill_weights[i]) if labeled else None,
            disagreement=_item(self.disagreement, i),
            disagreement_factor=None if labeled else float(self.distill_weights[i]),
        )

    def breakdowns(self) -> Iterator[LossBreakdown]:
        for i in range(len(self)):
            yield self.breakdown(i)


def distill_loss(teacher_ensemble: object, student_pred: object, eps: float = EPS_LOG) -> float | np.ndarray:
    """Cross-entropy of the student's soft label against the ensemble soft label."""
    return cross_entropy(teacher_ensemble, student_pred, eps)


def student_logit_gradient(
    student_probs: object,
    teacher_target: object,
    distill_weight: object,
    label: object | None = None,
) -> np.ndarray:
    """d total / d student logits, per sample."""
    s = np.asarray(student_probs, dtype=np.float64)
    t = np.asarray(teacher_target, dtype=np.float64)
    w = np.asarray(distill_weight, dtype=np.float64)
    grad = w[..., np.newaxis] * (s * t.sum(axis=-1, keepdims=True) - t)
    if label is not None:
        grad = grad + (s - one_hot(label, s.shape[-1]))
    return grad


def _as_batch(preds: TeacherPredictionSet) -> TeacherPredictionSet:
    if preds.batched:
        return preds
    losses = None if preds.task_losses is None else preds.task_losses[np.newaxis]
    return TeacherPredictionSet(predictions=preds.predictions[np.newaxis], task_losses=losses)


def _check_student(preds: TeacherPredictionSet, student: np.ndarray) -> None:
    if student.shape != (preds.predictions.shape[0], preds.num_classes):
        raise ChorusError(
            code="class_count_mismatch",
            technical=f"class-count mismatch: student {student.shape} vs teachers {preds.predictions.shape}",
        )


def labeled_batch_loss(
    preds: TeacherPredictionSet,
    student_probs: object,
    labels: object,
    cfg: DistillConfig,
) -> BatchLoss:
    if preds.task_losses is None:
        raise ChorusError(code="labels_required", technical="labels required: teacher task losses are missing")
    preds = _as_batch(preds)
    student = np.atleast_2d(np.asarray(student_probs, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    _check_student(preds, student)

    task_losses = preds.task_losses
    if cfg.enable_teacher_weighting:
        weights = correctness_weights(task_losses, cfg.weight_mode, cfg.eps_w)
        target = weighted_ensemble(preds, weights)
    else:
        weights = EnsembleWeights.uniform(preds.n_teachers, len(preds))
        target = uniform_ensemble(preds)
    ld = np.atleast_1d(distill_loss(target, student, cfg.eps_log))
    ls = np.atleast_1d(cross_entropy(one_hot(y, preds.num_classes), student, cfg.eps_log))
    if cfg.enable_labeled_loss_weighting:
        labeled_weight = 1.0 / (1.0 + task_losses.mean(axis=-1))
    else:
        labeled_weight = np.ones(len(preds))
    return BatchLoss(
        kind="labeled",
        student_probs=student,
        targets=target,
        distill=ld,
        distill_weights=labeled_weight,
        totals=labeled_weight * ld + ls,
        labels=y,
        teacher_losses=task_losses,
        teacher_weights=weights.weights,
        student_task=ls,
    )


def unlabeled_batch_loss(preds: TeacherPredictionSet, student_probs: object, cfg: DistillConfig) -> BatchLoss:
    preds = _as_batch(preds)
    student = np.atleast_2d(np.asarray(student_probs, dtype=np.float64))
    _check_student(preds, student)

    target = uniform_ensemble(preds)
    ld = np.atleast_1d(distill_loss(target, student, cfg.eps_log))
    lp = np.atleast_1d(disagreement(preds, cfg.eps_log))
    lam = cfg.lam if cfg.enable_disagreement_weighting else 0.0
    factor = 1.0 + lam * lp
    return BatchLoss(
        kind="unlabeled",
        student_probs=student,
        targets=target,
        distill=ld,
        distill_weights=factor,
        totals=factor * ld,
        disagreement=lp,
    )


def labeled_sample_loss(
    preds: TeacherPredictionSet,
    student_pred: object,
    label: int,
    cfg: DistillConfig,
) -> LossBreakdown:
    return labeled_batch_loss(preds, student_pred, label, cfg).breakdown(0)


def unlabeled_sample_loss(preds: TeacherPredictionSet, student_pred: object, cfg: DistillConfig) -> LossBreakdown:
    return unlabeled_batch_loss(preds, student_pred, cfg).breakdown(0)


def _totals(batch: BatchLoss | Sequence[float] | np.ndarray | None) -> np.ndarray:
    if batch is None:
        return np.zeros(0)
    if isinstance(batch, BatchLoss):
        return batch.totals
    return np.asarray(batch, dtype=np.float64)


def combined_batch_loss(
    labeled: BatchLoss | Sequence[float] | np.ndarray | None,
    unlabeled: BatchLoss | Sequence[float] | np.ndarray | None,
    cfg: DistillConfig,
) -> float:
    """Mean labeled total + mean unlabeled total, skipping an empty side.

    Both policies report the same value; they differ only in how training
    schedules the optimizer steps.
    """
    lab = _totals(labeled)
    unl = _totals(unlabeled)
    if lab.size == 0 and unl.size == 0:
        raise ChorusError(code="empty_batches", technical="both labeled and unlabeled batches are empty")
    value = 0.0
    if lab.size:
        value += float(np.mean(lab))
    if unl.size:
        value += float(np.mean(unl))
    return value
