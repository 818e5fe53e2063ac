"""End-to-end drivers: teachers, the five comparison methods, ablations and the lambda sweep.

Seeds are derived from one master seed with fixed offsets:
teacher i trains with ``master + 1000 * (i + 1)``, the split uses
``master + SPLIT_SEED_OFFSET`` and the generated test draw
``master + TEST_SEED_OFFSET``. Students use the per-run seed directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from chorus.checkpoint import Checkpoint, CheckpointMetadata, save_checkpoint
from chorus.config import RunConfig
from chorus.data import (
    ArrayView,
    LabeledExample,
    SplitDataset,
    carve_validation,
    generate_gaussian_mixture,
    grid_means,
    load_csv,
    load_csv_with_labels,
    restore_labels,
    ring_means,
    split,
)
from chorus.diagnostics import ChorusError
from chorus.distill import DistillConfig
from chorus.ensemble import TeacherEnsemble
from chorus.model import MlpArchitecture, accuracy, init_parameters
from chorus.report import ExperimentReport
from chorus.training import DistillPools, LossLog, TrainingConfig, TrainResult, distill_student, train_classifier


logger = logging.getLogger(__name__)

TEACHER_SEED_STRIDE = 1000
SPLIT_SEED_OFFSET = 17
TEST_SEED_OFFSET = 29
VALIDATION_SEED_OFFSET = 43


class MethodId(str, Enum):
    SINGLE = "single"
    ENSEMBLE = "ensemble"
    KD_LABELED = "kd_labeled"
    KD_UNLABELED = "kd_unlabeled"
    UNIKD = "unikd"


ALL_METHODS = tuple(MethodId)


def teacher_seed(master_seed: int, index: int) -> int:
    return master_seed + TEACHER_SEED_STRIDE * (index + 1)


def parse_method(method: MethodId | str) -> MethodId:
    try:
        return MethodId(method)
    except ValueError:
        raise ChorusError(
            code="unknown_method",
            technical=f"unknown method `{method}`",
        ) from None


@dataclass(frozen=True)
class PreparedData:
    source: list[LabeledExample]
    dataset: SplitDataset
    input_dim: int
    num_classes: int

    def teacher_rows(self, include_unlabeled: bool) -> list[LabeledExample]:
        if include_unlabeled:
            return restore_labels(self.dataset, self.source)
        return list(self.dataset.labeled_train)


def _mixture_means(cfg: RunConfig) -> np.ndarray:
    if cfg.layout == "ring":
        return ring_means(cfg.num_classes, cfg.spacing)
    return grid_means(cfg.num_classes, cfg.spacing)


def prepare_data(cfg: RunConfig) -> PreparedData:
    """Generate (or load) the source rows and split them per the config."""
    split_seed = cfg.master_seed + SPLIT_SEED_OFFSET
    if cfg.data_path:
        source, label_map = load_csv_with_labels(cfg.data_path)
        test = load_csv(cfg.test_path, label_map=label_map) if cfg.test_path else None
        if test is None and cfg.test_fraction <= 0.0:
            raise ChorusError(code="no_test_data", technical="no test_path given and test_fraction is 0")
        num_classes = 1 + max(ex.label for ex in [*source, *(test or [])])
        num_classes = max(num_classes, 2)
    else:
        means = _mixture_means(cfg)
        source = generate_gaussian_mixture(cfg.num_classes, cfg.train_per_class, means, cfg.cov_scale, cfg.master_seed)
        test = generate_gaussian_mixture(
            cfg.num_classes,
            cfg.test_per_class,
            means,
            cfg.cov_scale,
            cfg.master_seed + TEST_SEED_OFFSET,
        )
        num_classes = cfg.num_classes

    dataset = split(source, cfg.labeled_fraction, cfg.val_fraction, cfg.test_fraction, split_seed)
    if test is not None:
        dataset = replace(dataset, test=test)
    input_dim = len(source[0].features)
    logger.info(
        "data ready: labeled=%d unlabeled=%d validation=%d test=%d",
        *dataset.sizes(),
    )
    return PreparedData(source=source, dataset=dataset, input_dim=input_dim, num_classes=num_classes)


def train_teachers(
    dataset: SplitDataset,
    arch: MlpArchitecture,
    n_teachers: int,
    training: TrainingConfig,
    master_seed: int,
    checkpoint_dir: str | Path | None = None,
    rows: Sequence[LabeledExample] | None = None,
) -> list[Checkpoint]:
    """Train ``n_teachers`` teachers that differ only by their derived seed.

    ``rows`` overrides the training rows (defaults to the labeled partition).
    """
    if n_teachers < 2:
        raise ChorusError(code="too_few_teachers", technical=f"need at least 2 teachers, got {n_teachers}")
    view = ArrayView.labeled(list(rows) if rows is not None else dataset.labeled_train, arch.input_dim)
    checkpoints: list[Checkpoint] = []
    for i in range(n_teachers):
        seed = teacher_seed(master_seed, i)
        name = f"teacher {i}"
        result = train_classifier(init_parameters(arch, seed), view, training, seed, name=name)
        ckpt = Checkpoint(
            parameters=result.params,
            metadata=CheckpointMetadata(seed=seed, epochs=training.epochs, final_train_loss=result.final_loss),
        )
        checkpoints.append(ckpt)
        logger.info(
            "%s trained: loss %.4f, train accuracy %.4f",
            name,
            result.final_loss,
            accuracy(result.params, view.features, view.labels),
        )
        if checkpoint_dir is not None:
            save_checkpoint(Path(checkpoint_dir) / f"teacher-{i}.json", ckpt)
    return checkpoints


def ensemble_of(checkpoints: Sequence[Checkpoint]) -> TeacherEnsemble:
    return TeacherEnsemble([c.parameters for c in checkpoints])


def _test_view(dataset: SplitDataset, input_dim: int) -> ArrayView:
    if not dataset.test:
        raise ChorusError(code="no_test_data", technical="the dataset has no test partition")
    return ArrayView.labeled(dataset.test, input_dim)


def build_pools(dataset: SplitDataset, teachers: TeacherEnsemble) -> DistillPools:
    input_dim = teachers.teachers[0].architecture.input_dim
    labeled = unlabeled = None
    labeled_teachers = unlabeled_teachers = None
    if dataset.labeled_train:
        labeled = ArrayView.labeled(dataset.labeled_train, input_dim)
        labeled_teachers = teachers.predict(labeled.features, labeled.labels)
    if dataset.unlabeled_train:
        unlabeled = ArrayView.unlabeled(dataset.unlabeled_train, input_dim)
        unlabeled_teachers = teachers.predict(unlabeled.features)
    return DistillPools(
        labeled=labeled,
        labeled_teachers=labeled_teachers,
        unlabeled=unlabeled,
        unlabeled_teachers=unlabeled_teachers,
    )


def train_student(
    dataset: SplitDataset,
    teachers: TeacherEnsemble,
    cfg: DistillConfig,
    seed: int,
    training: TrainingConfig,
    use_labeled: bool = True,
    use_unlabeled: bool = True,
    loss_log: LossLog | None = None,
) -> TrainResult:
    pools = build_pools(dataset, teachers)
    if not use_labeled:
        pools = pools.without_labeled()
    if not use_unlabeled:
        pools = pools.without_unlabeled()
    arch = teachers.teachers[0].architecture
    return distill_student(arch, pools, cfg, training, seed, loss_sink=loss_log)


def run_student(
    dataset: SplitDataset,
    teachers: TeacherEnsemble,
    cfg: DistillConfig,
    seed: int,
    training: TrainingConfig,
    use_labeled: bool = True,
    use_unlabeled: bool = True,
    loss_log: LossLog | None = None,
    evaluate_on: Sequence[LabeledExample] | None = None,
) -> float:
    student = train_student(dataset, teachers, cfg, seed, training, use_labeled, use_unlabeled, loss_log).params
    input_dim = student.architecture.input_dim
    view = _test_view(dataset, input_dim) if evaluate_on is None else ArrayView.labeled(evaluate_on, input_dim)
    return accuracy(student, view.features, view.labels)


def run_method(
    method: MethodId | str,
    dataset: SplitDataset,
    teachers: TeacherEnsemble,
    cfg: DistillConfig,
    seed: int,
    training: TrainingConfig,
    loss_log: LossLog | None = None,
) -> float:
    """Test accuracy of one comparison method.

    ``single`` is the mean accuracy of the individual teachers; ``kd_labeled``
    and ``kd_unlabeled`` are the plain (unweighted) baselines on one pool each.
    """
    method = parse_method(method)
    if loss_log is not None:
        loss_log.run_label = f"{method.value}/seed={seed}"
    if method is MethodId.SINGLE:
        view = _test_view(dataset, teachers.teachers[0].architecture.input_dim)
        return float(np.mean(teachers.individual_accuracies(view.features, view.labels)))
    if method is MethodId.ENSEMBLE:
        view = _test_view(dataset, teachers.teachers[0].architecture.input_dim)
        return teachers.ensemble_accuracy(view.features, view.labels)
    if method is MethodId.KD_LABELED:
        return run_student(dataset, teachers, cfg.plain(), seed, training, use_unlabeled=False, loss_log=loss_log)
    if method is MethodId.KD_UNLABELED:
        return run_student(dataset, teachers, cfg.plain(), seed, training, use_labeled=False, loss_log=loss_log)
    return run_student(dataset, teachers, cfg, seed, training, loss_log=loss_log)


def compare_methods(
    dataset: SplitDataset,
    teachers: TeacherEnsemble,
    cfg: DistillConfig,
    seeds: Sequence[int],
    training: TrainingConfig,
    methods: Sequence[MethodId | str] = ALL_METHODS,
    provenance: dict | None = None,
    loss_log: LossLog | None = None,
) -> ExperimentReport:
    report = ExperimentReport(title="method comparison", provenance=dict(provenance or {}))
    for method in (parse_method(m) for m in methods):
        lam = cfg.lam if method is MethodId.UNIKD else None
        for seed in seeds:
            acc = run_method(method, dataset, teachers, cfg, seed, training, loss_log=loss_log)
            logger.info("%s seed %d: accuracy %.4f", method.value, seed, acc)
            report.add(method.value, seed, acc, lam)
    report.notes.append(f"single = mean test accuracy of the {len(teachers)} teachers")
    ordering = report.method_ordering_holds()
    if ordering is not None:
        report.notes.append(
            "single < kd_labeled < kd_unlabeled < unikd <= ensemble: " + ("holds" if ordering else "does not hold")
        )
    return report


def ablation_data_sources(
    dataset: SplitDataset,
    teachers: TeacherEnsemble,
    cfg: DistillConfig,
    seeds: Sequence[int],
    training: TrainingConfig,
    provenance: dict | None = None,
    loss_log: LossLog | None = None,
) -> ExperimentReport:
    """Full objective distilled on labeled data only, unlabeled data only, and both."""
    report = ExperimentReport(title="distillation data sources", provenance=dict(provenance or {}))
    variants = (("labeled", True, False), ("unlabeled", False, True), ("both", True, True))
    for name, use_labeled, use_unlabeled in variants:
        for seed in seeds:
            if loss_log is not None:
                loss_log.run_label = f"{name}/seed={seed}"
            acc = run_student(dataset, teachers, cfg, seed, training, use_labeled, use_unlabeled, loss_log)
            report.add(name, seed, acc, cfg.lam)
    return report


def weighting_variants(cfg: DistillConfig, include_plain: bool = False) -> list[tuple[str, DistillConfig]]:
    variants = [
        ("full", cfg),
        ("no_teacher_weighting", replace(cfg, enable_teacher_weighting=False)),
        ("no_labeled_loss_weighting", replace(cfg, enable_labeled_loss_weighting=False)),
        ("no_disagreement_weighting", replace(cfg, enable_disagreement_weighting=False)),
    ]
    if include_plain:
        variants.append(("plain", cfg.plain()))
    return variants


def ablation_weighting(
    dataset: SplitDataset,
    teachers: TeacherEnsemble,
    cfg: DistillConfig,
    seeds: Sequence[int],
    training: TrainingConfig,
    include_plain: bool = False,
    provenance: dict | None = None,
    loss_log: LossLog | None = None,
) -> ExperimentReport:
    report = ExperimentReport(title="weighting mechanisms", provenance=dict(provenance or {}))
    for name, variant in weighting_variants(cfg, include_plain):
        for seed in seeds:
            if loss_log is not None:
                loss_log.run_label = f"{name}/seed={seed}"
            acc = run_student(dataset, teachers, variant, seed, training, loss_log=loss_log)
            report.add(name, seed, acc, variant.lam)
    return report


def _check_grid(lambda_values: Sequence[float]) -> list[float]:
    values = [float(v) for v in lambda_values]
    if not values or any(not v >= 0.0 for v in values):
        raise ChorusError(code="invalid_sweep", technical=f"invalid lambda grid {values}")
    return values


def sweep_lambda(
    dataset: SplitDataset,
    teachers: TeacherEnsemble,
    cfg: DistillConfig,
    lambda_values: Sequence[float],
    seeds: Sequence[int],
    training: TrainingConfig,
    provenance: dict | None = None,
    loss_log: LossLog | None = None,
) -> ExperimentReport:
    report = ExperimentReport(title="lambda sweep", provenance=dict(provenance or {}))
    for lam in _check_grid(lambda_values):
        variant = replace(cfg, lam=lam, enable_disagreement_weighting=True)
        for seed in seeds:
            if loss_log is not None:
                loss_log.run_label = f"lambda={lam}/seed={seed}"
            acc = run_student(dataset, teachers, variant, seed, training, loss_log=loss_log)
            report.add(MethodId.UNIKD.value, seed, acc, lam)
    return report


def select_lambda(
    dataset: SplitDataset,
    teachers: TeacherEnsemble,
    cfg: DistillConfig,
    lambda_values: Sequence[float],
    seed: int,
    training: TrainingConfig,
    validation_fraction: float = 0.1,
    provenance: dict | None = None,
) -> tuple[float, ExperimentReport]:
    """Pick lambda on a validation share of the labeled data, then retrain on all of it.

    Ties go to the smaller lambda.
    """
    values = _check_grid(lambda_values)
    tuning = carve_validation(dataset, validation_fraction, seed + VALIDATION_SEED_OFFSET)
    if not tuning.validation:
        raise ChorusError(code="invalid_fraction", technical="validation share is empty; raise validation_fraction")
    report = ExperimentReport(title="lambda selection", provenance=dict(provenance or {}))
    best_lam, best_acc = values[0], -1.0
    for lam in values:
        variant = replace(cfg, lam=lam, enable_disagreement_weighting=True)
        acc = run_student(tuning, teachers, variant, seed, training, evaluate_on=tuning.validation)
        report.add("validation", seed, acc, lam)
        if acc > best_acc or (acc == best_acc and lam < best_lam):
            best_lam, best_acc = lam, acc
    final = replace(cfg, lam=best_lam, enable_disagreement_weighting=True)
    report.add(MethodId.UNIKD.value, seed, run_student(dataset, teachers, final, seed, training), best_lam)
    report.notes.append(f"selected lambda = {best_lam!r} (validation accuracy {best_acc:.4f})")
    return best_lam, report


def new_run_dir(output_dir: str | Path, seed: int, now: datetime | None = None) -> Path:
    """``<output_dir>/<YYYYmmdd-HHMMSS>-seed<seed>``, suffixed ``-1``, ``-2`` ... on collision."""
    stamp = (now or datetime.now()).strftime("%Y%m%d-%H%M%S")
    base = Path(output_dir) / f"{stamp}-seed{seed}"
    candidate = base
    counter = 0
    while True:
        try:
            candidate.mkdir(parents=True, exist_ok=False)
            return candidate
        except FileExistsError:
            counter += 1
            candidate = base.with_name(f"{base.name}-{counter}")
