"""Probability and divergence primitives.

Every function works on the last axis, so a single distribution (shape ``(C,)``)
and a batch of them (shape ``(B, C)``) go through the same code. Scalars come
back as ``float``, batches as ``np.ndarray``. All arithmetic is float64.
"""

from __future__ import annotations

import numpy as np

from chorus.diagnostics import ChorusError


EPS_LOG = 1e-12
PROB_TOLERANCE = 1e-9


def _as_float_array(values: object) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)


def _scalar_or_array(values: np.ndarray) -> float | np.ndarray:
    if values.ndim == 0:
        return float(values)
    return values


def _check_same_classes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ChorusError(
            code="class_count_mismatch",
            technical=f"class-count mismatch: {a.shape[-1]} vs {b.shape[-1]}",
        )


def as_prob_vector(values: object, tolerance: float = PROB_TOLERANCE) -> np.ndarray:
    """Validate and return a (batch of) probability vector(s)."""
    probs = _as_float_array(values)
    if probs.ndim == 0 or probs.shape[-1] < 2:
        raise ChorusError(
            code="invalid_probabilities",
            technical=f"a probability vector needs at least 2 classes, got shape {probs.shape}",
        )
    if not np.all(np.isfinite(probs)):
        raise ChorusError(code="invalid_probabilities", technical="probabilities must be finite")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ChorusError(code="invalid_probabilities", technical="probabilities must lie in [0, 1]")
    sums = probs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tolerance):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ChorusError(
            code="invalid_probabilities",
            technical=f"probabilities must sum to 1 (off by {worst:.3g})",
        )
    return probs


def softmax(logits: object) -> np.ndarray:
    z = _as_float_array(logits)
    if z.ndim == 0 or not np.all(np.isfinite(z)):
        raise ChorusError(code="invalid_logits", technical="invalid logits: values must be finite")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def clamp_probs(probs: np.ndarray, eps: float = EPS_LOG) -> np.ndarray:
    return np.clip(probs, eps, 1.0)


def cross_entropy(target: object, pred: object, eps: float = EPS_LOG) -> float | np.ndarray:
    """-sum(target * log(pred)) with pred clamped to [eps, 1]."""
    t = _as_float_array(target)
    p = _as_float_array(pred)
    _check_same_classes(t, p)
    ce = -np.sum(t * np.log(clamp_probs(p, eps)), axis=-1)
    return _scalar_or_array(np.maximum(ce, 0.0))


def kl_divergence(p: object, q: object, eps: float = EPS_LOG) -> float | np.ndarray:
    """KL(p || q) with both arguments clamped to [eps, 1]."""
    pa = _as_float_array(p)
    qa = _as_float_array(q)
    _check_same_classes(pa, qa)
    pc = clamp_probs(pa, eps)
    qc = clamp_probs(qa, eps)
    kl = np.sum(pc * (np.log(pc) - np.log(qc)), axis=-1)
    return _scalar_or_array(np.maximum(kl, 0.0))


def one_hot(labels: object, num_classes: int) -> np.ndarray:
    idx = np.asarray(labels, dtype=np.int64)
    return np.eye(num_classes, dtype=np.float64)[idx]
