from __future__ import annotations

import math
import unittest

import numpy as np

from chorus.diagnostics import ChorusError
from chorus.ensemble import (
    EnsembleWeights,
    TeacherEnsemble,
    TeacherPredictionSet,
    WeightMode,
    correctness_weights,
    disagreement,
    teacher_task_losses,
    uniform_ensemble,
    weighted_ensemble,
)
from chorus.model import MlpArchitecture, init_parameters, predict
from chorus.numerics import kl_divergence


class TaskLossTests(unittest.TestCase):
    def test_values(self) -> None:
        losses = teacher_task_losses([[1.0, 0.0], [1 / 3, 2 / 3], [0.4, 0.6]], 0)
        self.assertLessEqual(losses[0], 1e-10)
        self.assertAlmostEqual(losses[1], math.log(3.0), places=12)
        self.assertAlmostEqual(losses[2], 0.9162907, places=6)

    def test_uniform_prediction_is_log_classes(self) -> None:
        losses = teacher_task_losses(np.full((2, 4), 0.25), 3)
        np.testing.assert_allclose(losses, [math.log(4.0)] * 2, atol=1e-12)

    def test_batched_labels(self) -> None:
        preds = np.array([[[0.9, 0.1], [0.6, 0.4]], [[0.2, 0.8], [0.5, 0.5]]])
        losses = teacher_task_losses(preds, [0, 1])
        np.testing.assert_allclose(losses, -np.log([[0.9, 0.6], [0.8, 0.5]]), atol=1e-12)


class WeightTests(unittest.TestCase):
    def test_equal_losses_give_uniform(self) -> None:
        for mode in WeightMode:
            w = correctness_weights([0.7, 0.7, 0.7], mode).weights
            np.testing.assert_allclose(w, [1 / 3] * 3, atol=1e-12)

    def test_inverse_and_literal_modes(self) -> None:
        np.testing.assert_allclose(correctness_weights([1.0, 3.0]).weights, [0.75, 0.25], atol=1e-6)
        np.testing.assert_allclose(
            correctness_weights([1.0, 3.0], WeightMode.LITERAL_EQ1).weights,
            [0.25, 0.75],
            atol=1e-15,
        )

    def test_literal_mode_with_all_zero_losses_is_uniform(self) -> None:
        np.testing.assert_allclose(correctness_weights([0.0, 0.0], "literal_eq1").weights, [0.5, 0.5])

    def test_permutation_equivariant_and_normalized(self) -> None:
        rng = np.random.default_rng(0)
        for _ in range(20):
            losses = rng.exponential(size=5)
            perm = rng.permutation(5)
            w = correctness_weights(losses).weights
            self.assertAlmostEqual(float(w.sum()), 1.0, places=9)
            np.testing.assert_allclose(correctness_weights(losses[perm]).weights, w[perm], atol=1e-15)

    def test_negative_loss_rejected(self) -> None:
        with self.assertRaises(ChorusError) as ctx:
            correctness_weights([0.1, -0.2])
        self.assertEqual(ctx.exception.code, "negative_loss")


class EnsembleTests(unittest.TestCase):
    def test_basis_combination(self) -> None:
        preds = TeacherPredictionSet(np.array([[1.0, 0.0], [0.0, 1.0]]))
        out = weighted_ensemble(preds, EnsembleWeights(np.array([0.25, 0.75])))
        np.testing.assert_allclose(out, [0.25, 0.75])
        np.testing.assert_allclose(uniform_ensemble(preds), [0.5, 0.5])

    def test_matches_double_loop(self) -> None:
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(4), size=3)
        w = rng.dirichlet(np.ones(3))
        expected = [sum(w[i] * p[i][c] for i in range(3)) for c in range(4)]
        out = weighted_ensemble(TeacherPredictionSet(p), EnsembleWeights(w))
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_uniform_equals_weighted_with_uniform_weights(self) -> None:
        p = np.random.default_rng(4).dirichlet(np.ones(3), size=(6, 4))
        preds = TeacherPredictionSet(p)
        np.testing.assert_allclose(
            uniform_ensemble(preds),
            weighted_ensemble(preds, EnsembleWeights.uniform(4, batch=6)),
            atol=1e-12,
        )

    def test_output_stays_within_teacher_range(self) -> None:
        rng = np.random.default_rng(5)
        p = rng.dirichlet(np.ones(3), size=(20, 4))
        w = rng.dirichlet(np.ones(4), size=20)
        out = weighted_ensemble(TeacherPredictionSet(p), EnsembleWeights(w))
        self.assertTrue(np.all(out >= p.min(axis=1) - 1e-12))
        self.assertTrue(np.all(out <= p.max(axis=1) + 1e-12))

    def test_too_few_teachers(self) -> None:
        with self.assertRaises(ChorusError) as ctx:
            TeacherPredictionSet(np.array([[0.5, 0.5]]))
        self.assertEqual(ctx.exception.code, "too_few_teachers")


class DisagreementTests(unittest.TestCase):
    def test_identical_teachers(self) -> None:
        preds = TeacherPredictionSet(np.array([[0.3, 0.7]] * 3))
        self.assertLessEqual(disagreement(preds), 1e-12)

    def test_two_teachers(self) -> None:
        preds = TeacherPredictionSet(np.array([[0.8, 0.2], [0.2, 0.8]]))
        self.assertAlmostEqual(disagreement(preds), 0.8317766, places=6)

    def test_positive_once_teachers_differ(self) -> None:
        near = TeacherPredictionSet(np.array([[0.5, 0.5], [0.501, 0.499]]))
        self.assertGreater(disagreement(near), 0.0)
        rng = np.random.default_rng(10)
        for _ in range(20):
            p = rng.dirichlet(np.ones(3), size=3)
            if 0.5 * np.abs(p[0] - p[1]).sum() >= 1e-3:
                self.assertGreater(disagreement(TeacherPredictionSet(p)), 0.0)

    def test_matches_ordered_pair_oracle(self) -> None:
        rng = np.random.default_rng(8)
        for _ in range(10):
            p = rng.dirichlet(np.ones(3), size=4)
            total = sum(kl_divergence(p[i], p[j]) for i in range(4) for j in range(4) if i != j)
            self.assertAlmostEqual(disagreement(TeacherPredictionSet(p)), total / 12, delta=1e-12)

    def test_batched_rows_match_single(self) -> None:
        p = np.random.default_rng(9).dirichlet(np.ones(3), size=(5, 3))
        batch = disagreement(TeacherPredictionSet(p))
        for b in range(5):
            self.assertAlmostEqual(batch[b], disagreement(TeacherPredictionSet(p[b])), delta=1e-14)


class TeacherEnsembleTests(unittest.TestCase):
    def test_predictions_and_accuracies(self) -> None:
        arch = MlpArchitecture(input_dim=2, hidden_dims=(4,), num_classes=3)
        teachers = TeacherEnsemble([init_parameters(arch, s) for s in (1, 2, 3)])
        x = np.random.default_rng(0).normal(size=(8, 2))
        labels = predict(teachers.teachers[0], x)
        preds = teachers.predict(x, labels)
        self.assertEqual(preds.predictions.shape, (8, 3, 3))
        self.assertEqual(preds.task_losses.shape, (8, 3))
        self.assertEqual(teachers.individual_accuracies(x, labels)[0], 1.0)
        expected = float(np.mean(np.argmax(uniform_ensemble(preds), axis=-1) == labels))
        self.assertEqual(teachers.ensemble_accuracy(x, labels), expected)

    def test_needs_two_teachers(self) -> None:
        with self.assertRaises(ChorusError):
            TeacherEnsemble([init_parameters(MlpArchitecture(), 0)])


if __name__ == "__main__":
    unittest.main()
