"""Training loops: teachers on the task loss, students on the distillation objectives."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, TextIO

import numpy as np

from chorus.data import ArrayView, batches
from chorus.diagnostics import ChorusError
from chorus.distill import (
    BatchLoss,
    CombinePolicy,
    DistillConfig,
    combined_batch_loss,
    labeled_batch_loss,
    unlabeled_batch_loss,
)
from chorus.ensemble import TeacherPredictionSet
from chorus.model import GradientSet, MlpArchitecture, MlpParameters, backward, init_parameters, predict_proba
from chorus.numerics import cross_entropy, one_hot
from chorus.optim import Optimizer, make_optimizer


logger = logging.getLogger(__name__)

# unlabeled batches are shuffled with their own key so adding a pool never
# changes the labeled order
UNLABELED_SHUFFLE_OFFSET = 500_000

LossSink = Callable[[int, BatchLoss], None]


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def make_optimizer(self) -> Optimizer:
        return make_optimizer(self.optimizer, self.lr, self.beta1, self.beta2, self.adam_eps)


@dataclass
class TrainResult:
    params: MlpParameters
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


@dataclass(frozen=True)
class DistillPools:
    """Student training data with the teachers' soft labels precomputed."""

    labeled: ArrayView | None = None
    labeled_teachers: TeacherPredictionSet | None = None
    unlabeled: ArrayView | None = None
    unlabeled_teachers: TeacherPredictionSet | None = None

    def without_unlabeled(self) -> DistillPools:
        return DistillPools(labeled=self.labeled, labeled_teachers=self.labeled_teachers)

    def without_labeled(self) -> DistillPools:
        return DistillPools(unlabeled=self.unlabeled, unlabeled_teachers=self.unlabeled_teachers)

    @property
    def n_labeled(self) -> int:
        return 0 if self.labeled is None else len(self.labeled)

    @property
    def n_unlabeled(self) -> int:
        return 0 if self.unlabeled is None else len(self.unlabeled)


def _add(a: GradientSet, b: GradientSet) -> GradientSet:
    return GradientSet(
        weights=[x + y for x, y in zip(a.weights, b.weights)],
        biases=[x + y for x, y in zip(a.biases, b.biases)],
    )


def _step(optimizer, params: MlpParameters, grads: GradientSet, name: str) -> MlpParameters:
    try:
        return optimizer.step(params, grads)
    except ChorusError as err:
        raise ChorusError(code=err.code, technical=err.technical, where=name) from err


def train_classifier(
    params: MlpParameters,
    data: ArrayView,
    training: TrainingConfig,
    seed: int,
    name: str = "model",
) -> TrainResult:
    """Plain cross-entropy training on labeled data."""
    if data.labels is None or len(data) == 0:
        raise ChorusError(code="labels_required", technical="labels required to train a classifier", where=name)
    optimizer = training.make_optimizer()
    num_classes = params.architecture.num_classes
    result = TrainResult(params=params)
    for epoch in range(training.epochs):
        running = 0.0
        for idx in batches(len(data), training.batch_size, seed, epoch):
            x = data.features[idx]
            target = one_hot(data.labels[idx], num_classes)
            probs = predict_proba(result.params, x)
            losses = cross_entropy(target, probs)
            running += float(np.sum(losses))
            upstream = (probs - target) / len(idx)
            result.params = _step(optimizer, result.params, backward(result.params, x, upstream), name)
        epoch_loss = running / len(data)
        if not np.isfinite(epoch_loss):
            raise ChorusError(code="diverged", technical=f"diverged: loss is {epoch_loss} at epoch {epoch}", where=name)
        result.epoch_losses.append(epoch_loss)
        logger.debug("%s epoch %d loss %.6f", name, epoch, epoch_loss)
    return result


def _labeled_grad(params: MlpParameters, pools: DistillPools, idx: np.ndarray, cfg: DistillConfig):
    x = pools.labeled.features[idx]
    batch = labeled_batch_loss(
        pools.labeled_teachers.take(idx),
        predict_proba(params, x),
        pools.labeled.labels[idx],
        cfg,
    )
    return batch, backward(params, x, batch.logit_gradient())


def _unlabeled_grad(params: MlpParameters, pools: DistillPools, idx: np.ndarray, cfg: DistillConfig):
    x = pools.unlabeled.features[idx]
    batch = unlabeled_batch_loss(pools.unlabeled_teachers.take(idx), predict_proba(params, x), cfg)
    return batch, backward(params, x, batch.logit_gradient())


def distill_student(
    arch: MlpArchitecture,
    pools: DistillPools,
    cfg: DistillConfig,
    training: TrainingConfig,
    seed: int,
    loss_sink: LossSink | None = None,
    name: str = "student",
) -> TrainResult:
    """Train a fresh student on whichever pools are present.

    ``sum`` pairs the k-th labeled and k-th unlabeled batch into one step on the
    summed batch means; ``interleave`` takes a labeled step, then an unlabeled step.
    """
    if pools.n_labeled == 0 and pools.n_unlabeled == 0:
        raise ChorusError(code="empty_batches", technical="student has no training data", where=name)
    optimizer = training.make_optimizer()
    result = TrainResult(params=init_parameters(arch, seed))

    for epoch in range(training.epochs):
        lab_batches = batches(pools.n_labeled, training.batch_size, seed, epoch)
        unl_batches = batches(pools.n_unlabeled, training.batch_size, seed + UNLABELED_SHUFFLE_OFFSET, epoch)
        step_losses: list[float] = []
        for k in range(max(len(lab_batches), len(unl_batches))):
            lab = unl = None
            if cfg.combine_policy is CombinePolicy.SUM:
                grads = None
                if k < len(lab_batches):
                    lab, grads = _labeled_grad(result.params, pools, lab_batches[k], cfg)
                if k < len(unl_batches):
                    unl, unl_grads = _unlabeled_grad(result.params, pools, unl_batches[k], cfg)
                    grads = unl_grads if grads is None else _add(grads, unl_grads)
                result.params = _step(optimizer, result.params, grads, name)
            else:
                if k < len(lab_batches):
                    lab, grads = _labeled_grad(result.params, pools, lab_batches[k], cfg)
                    result.params = _step(optimizer, result.params, grads, name)
                if k < len(unl_batches):
                    unl, grads = _unlabeled_grad(result.params, pools, unl_batches[k], cfg)
                    result.params = _step(optimizer, result.params, grads, name)
            step_losses.append(combined_batch_loss(lab, unl, cfg))
            if loss_sink is not None:
                for batch in (lab, unl):
                    if batch is not None:
                        loss_sink(epoch, batch)

        epoch_loss = float(np.mean(step_losses))
        if not np.isfinite(epoch_loss):
            raise ChorusError(code="diverged", technical=f"diverged: loss is {epoch_loss} at epoch {epoch}", where=name)
        result.epoch_losses.append(epoch_loss)
        logger.debug("%s epoch %d combined loss %.6f", name, epoch, epoch_loss)
    return result


class LossLog:
    """Appends one JSON object per sample per epoch to a ``.jsonl`` file."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle: TextIO | None = None
        self.run_label = ""

    def __enter__(self) -> LossLog:
        self._handle = self.path.open("a", encoding="utf-8")
        return self

    def __exit__(self, *exc: object) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __call__(self, epoch: int, batch: BatchLoss) -> None:
        if self._handle is None:
            raise RuntimeError("LossLog used outside a `with` block")
        for breakdown in batch.breakdowns():
            record = {"run": self.run_label, "epoch": epoch, **breakdown.to_json()}
            self._handle.write(json.dumps(record, sort_keys=True) + "\n")
