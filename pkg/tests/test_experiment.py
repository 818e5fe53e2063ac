from __future__ import annotations

import tempfile
import unittest
from dataclasses import replace
from datetime import datetime
from pathlib import Path

import numpy as np

from chorus.config import RunConfig
from chorus.data import ArrayView, write_csv
from chorus.diagnostics import ChorusError
from chorus.experiment import (
    MethodId,
    ablation_data_sources,
    ablation_weighting,
    compare_methods,
    ensemble_of,
    new_run_dir,
    prepare_data,
    run_method,
    run_student,
    select_lambda,
    sweep_lambda,
    teacher_seed,
    train_student,
    train_teachers,
)
from chorus.distill import CombinePolicy
from chorus.model import accuracy, parameter_distance
from chorus.report import format_table, report_csv

TINY = RunConfig(
    layout="ring",
    spacing=4.0,
    cov_scale=0.5,
    train_per_class=40,
    test_per_class=20,
    hidden_dims=(8,),
    n_teachers=3,
    teacher_epochs=4,
    student_epochs=3,
    lr=0.01,
    seeds=(0, 1),
)


class ExperimentTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.data = prepare_data(TINY)
        cls.arch = TINY.architecture(cls.data.input_dim, cls.data.num_classes)
        cls.checkpoints = train_teachers(
            cls.data.dataset, cls.arch, TINY.n_teachers, TINY.teacher_training(), TINY.master_seed
        )
        cls.teachers = ensemble_of(cls.checkpoints)
        cls.cfg = TINY.distill_config()
        cls.training = TINY.student_training()

    def test_prepared_sizes(self) -> None:
        self.assertEqual(self.data.dataset.sizes(), (60, 60, 0, 60))
        self.assertEqual(len(self.data.source), 120)
        self.assertEqual(self.data.num_classes, 3)

    def test_teachers_are_deterministic_and_distinct(self) -> None:
        again = train_teachers(self.data.dataset, self.arch, 3, TINY.teacher_training(), TINY.master_seed)
        for a, b in zip(self.checkpoints, again):
            self.assertEqual(parameter_distance(a.parameters, b.parameters), 0.0)
        for i in range(3):
            self.assertEqual(self.checkpoints[i].metadata.seed, teacher_seed(TINY.master_seed, i))
            for j in range(i + 1, 3):
                self.assertGreater(parameter_distance(self.checkpoints[i].parameters, self.checkpoints[j].parameters), 0.0)

    def test_teacher_checkpoints_written(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            train_teachers(self.data.dataset, self.arch, 2, replace(TINY.teacher_training(), epochs=1), 0, checkpoint_dir=tmp)
            self.assertEqual(sorted(p.name for p in Path(tmp).iterdir()), ["teacher-0.json", "teacher-1.json"])

    def test_teacher_rows_can_include_unlabeled(self) -> None:
        rows = self.data.teacher_rows(include_unlabeled=True)
        self.assertEqual(len(rows), 120)
        truth = {ex.row: ex.label for ex in self.data.source}
        self.assertEqual({ex.row: ex.label for ex in rows}, truth)
        self.assertEqual(self.data.teacher_rows(include_unlabeled=False), self.data.dataset.labeled_train)
        wide = train_teachers(self.data.dataset, self.arch, 2, replace(TINY.teacher_training(), epochs=1), 0, rows=rows)
        narrow = train_teachers(self.data.dataset, self.arch, 2, replace(TINY.teacher_training(), epochs=1), 0)
        self.assertGreater(parameter_distance(wide[0].parameters, narrow[0].parameters), 0.0)

    def test_teachers_beat_chance_on_labeled_train(self) -> None:
        training = replace(TINY.teacher_training(), epochs=40)
        checkpoints = train_teachers(self.data.dataset, self.arch, 2, training, TINY.master_seed)
        view = ArrayView.labeled(self.data.dataset.labeled_train, 2)
        chance = 1.0 / self.data.num_classes
        for ckpt in checkpoints:
            self.assertGreaterEqual(accuracy(ckpt.parameters, view.features, view.labels), chance + 0.2)

    def test_interleave_schedule(self) -> None:
        interleave = replace(self.cfg, combine_policy=CombinePolicy.INTERLEAVE)
        args = (self.data.dataset, self.teachers)
        one_pool_sum = train_student(*args, self.cfg, 0, self.training, use_unlabeled=False)
        one_pool_interleave = train_student(*args, interleave, 0, self.training, use_unlabeled=False)
        self.assertEqual(parameter_distance(one_pool_sum.params, one_pool_interleave.params), 0.0)
        self.assertEqual(one_pool_sum.epoch_losses, one_pool_interleave.epoch_losses)

        both_sum = train_student(*args, self.cfg, 0, self.training)
        both_interleave = train_student(*args, interleave, 0, self.training)
        self.assertGreater(parameter_distance(both_sum.params, both_interleave.params), 0.0)
        self.assertEqual(len(both_interleave.epoch_losses), TINY.student_epochs)
        self.assertTrue(all(np.isfinite(both_interleave.epoch_losses)))

    def test_reference_methods(self) -> None:
        test = ArrayView.labeled(self.data.dataset.test, 2)
        ensemble = run_method(MethodId.ENSEMBLE, self.data.dataset, self.teachers, self.cfg, 0, self.training)
        self.assertEqual(ensemble, self.teachers.ensemble_accuracy(test.features, test.labels))
        single = run_method("single", self.data.dataset, self.teachers, self.cfg, 0, self.training)
        self.assertAlmostEqual(single, float(np.mean(self.teachers.individual_accuracies(test.features, test.labels))))

    def test_plain_labeled_only_reproduces_kd_labeled(self) -> None:
        kd = run_method(MethodId.KD_LABELED, self.data.dataset, self.teachers, self.cfg, 1, self.training)
        same = run_student(self.data.dataset, self.teachers, self.cfg.plain(), 1, self.training, use_unlabeled=False)
        self.assertEqual(kd, same)

    def test_unknown_method(self) -> None:
        with self.assertRaises(ChorusError) as ctx:
            run_method("bagging", self.data.dataset, self.teachers, self.cfg, 0, self.training)
        self.assertEqual(ctx.exception.code, "unknown_method")

    def test_compare_report_shape(self) -> None:
        report = compare_methods(self.data.dataset, self.teachers, self.cfg, (0,), self.training)
        self.assertEqual([e.method for e in report.entries], [m.value for m in MethodId])
        self.assertTrue(report_csv(report).startswith("method,seed,lambda,accuracy\n"))
        self.assertIn("unikd", format_table(report))

    def test_data_source_ablation(self) -> None:
        report = ablation_data_sources(self.data.dataset, self.teachers, self.cfg, TINY.seeds, self.training)
        self.assertEqual(len(report.entries), 3 * len(TINY.seeds))
        for seed in TINY.seeds:
            both = [e.accuracy for e in report.entries if e.method == "both" and e.seed == seed]
            full = run_method(MethodId.UNIKD, self.data.dataset, self.teachers, self.cfg, seed, self.training)
            self.assertEqual(both, [full])
        labeled = report.accuracies("labeled")
        expected = [
            run_student(self.data.dataset, self.teachers, self.cfg, s, self.training, use_unlabeled=False)
            for s in TINY.seeds
        ]
        self.assertEqual(labeled, expected)

    def test_weighting_ablation_and_sweep_agree_at_zero_lambda(self) -> None:
        report = ablation_weighting(self.data.dataset, self.teachers, self.cfg, (0,), self.training, include_plain=True)
        self.assertEqual(
            [e.method for e in report.entries],
            ["full", "no_teacher_weighting", "no_labeled_loss_weighting", "no_disagreement_weighting", "plain"],
        )
        sweep = sweep_lambda(self.data.dataset, self.teachers, self.cfg, [0.0, 10.0], (0,), self.training)
        self.assertEqual([e.lam for e in sweep.entries], [0.0, 10.0])
        self.assertEqual(sweep.accuracies("unikd", 0.0), report.accuracies("no_disagreement_weighting"))
        self.assertEqual(sweep.accuracies("unikd", 10.0), report.accuracies("full"))

    def test_invalid_sweep(self) -> None:
        for grid in ([], [1.0, -2.0]):
            with self.assertRaises(ChorusError) as ctx:
                sweep_lambda(self.data.dataset, self.teachers, self.cfg, grid, (0,), self.training)
            self.assertEqual(ctx.exception.code, "invalid_sweep")

    def test_select_lambda_picks_from_grid(self) -> None:
        best, report = select_lambda(
            self.data.dataset, self.teachers, self.cfg, [0.0, 5.0], 0, self.training, validation_fraction=0.2
        )
        self.assertIn(best, (0.0, 5.0))
        self.assertEqual([e.method for e in report.entries], ["validation", "validation", "unikd"])
        self.assertEqual(report.entries[-1].lam, best)


class PrepareDataTests(unittest.TestCase):
    def test_csv_without_test_data(self) -> None:
        rows = prepare_data(TINY).source
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(Path(tmp) / "train.csv", rows)
            with self.assertRaises(ChorusError) as ctx:
                prepare_data(replace(TINY, data_path=str(path)))
            self.assertEqual(ctx.exception.code, "no_test_data")
            data = prepare_data(replace(TINY, data_path=str(path), test_fraction=0.25))
        self.assertEqual(data.dataset.sizes(), (60, 30, 0, 30))

    def test_csv_test_file_uses_training_class_indices(self) -> None:
        train_lines = ["f0,f1,label"]
        for i in range(12):
            name, x = ("cat", -2.0) if i % 2 == 0 else ("dog", 2.0)
            train_lines.append(f"{x + 0.01 * i},0.0,{name}")
        test_lines = ["f0,f1,label", "2.1,0.0,dog", "-2.1,0.0,cat", "1.9,0.0,dog", "-1.9,0.0,cat"]
        with tempfile.TemporaryDirectory() as tmp:
            train = Path(tmp) / "train.csv"
            test = Path(tmp) / "test.csv"
            train.write_text("\n".join(train_lines) + "\n", encoding="utf-8")
            test.write_text("\n".join(test_lines) + "\n", encoding="utf-8")
            data = prepare_data(replace(TINY, data_path=str(train), test_path=str(test)))

            test.write_text("f0,f1,label\n0.0,0.0,bird\n", encoding="utf-8")
            with self.assertRaises(ChorusError) as ctx:
                prepare_data(replace(TINY, data_path=str(train), test_path=str(test)))
        self.assertEqual(ctx.exception.code, "invalid_label")
        self.assertEqual(data.num_classes, 2)
        for ex in [*data.source, *data.dataset.test]:
            self.assertEqual(ex.label, 1 if ex.features[0] > 0 else 0)

    def test_run_dirs_never_collide(self) -> None:
        stamp = datetime(2024, 5, 1, 12, 0, 0)
        with tempfile.TemporaryDirectory() as tmp:
            first = new_run_dir(tmp, 7, now=stamp)
            second = new_run_dir(tmp, 7, now=stamp)
            third = new_run_dir(tmp, 7, now=stamp)
        self.assertEqual(first.name, "20240501-120000-seed7")
        self.assertEqual(second.name, "20240501-120000-seed7-1")
        self.assertEqual(third.name, "20240501-120000-seed7-2")


if __name__ == "__main__":
    unittest.main()
