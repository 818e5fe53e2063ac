"""Feed-forward classifier with exact analytic gradients.

Weights are stored fan_in x fan_out, so a layer computes ``x @ W + b``.
Inputs may be a single feature vector ``(d,)`` or a batch ``(B, d)``.
``backward`` returns the gradient of ``sum(upstream * logits)``; callers that
want a batch mean scale ``upstream`` by ``1/B`` first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from chorus.diagnostics import ChorusError
from chorus.numerics import softmax


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int = 2
    hidden_dims: tuple[int, ...] = (32,)
    num_classes: int = 3
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ChorusError(
                code="invalid_architecture",
                technical=f"layer sizes must be positive: {self.layer_sizes()}",
            )
        if self.num_classes < 2:
            raise ChorusError(
                code="invalid_architecture",
                technical=f"num_classes must be >= 2, got {self.num_classes}",
            )

    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.num_classes]

    def layer_shapes(self) -> list[tuple[int, int]]:
        sizes = self.layer_sizes()
        return [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]

    def to_dict(self) -> dict[str, object]:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "num_classes": self.num_classes,
            "activation": self.activation.value,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, object]) -> MlpArchitecture:
        return cls(
            input_dim=int(raw["input_dim"]),
            hidden_dims=tuple(int(h) for h in raw["hidden_dims"]),
            num_classes=int(raw["num_classes"]),
            activation=Activation(raw["activation"]),
        )


@dataclass(eq=False)
class LayerArrays:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> Iterator[np.ndarray]:
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        return [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(a))) for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


@dataclass(eq=False)
class MlpParameters(LayerArrays):
    architecture: MlpArchitecture = field(default_factory=MlpArchitecture)

    def copy(self) -> MlpParameters:
        return MlpParameters(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            architecture=self.architecture,
        )

    def with_arrays(self, weights: list[np.ndarray], biases: list[np.ndarray]) -> MlpParameters:
        return MlpParameters(weights=weights, biases=biases, architecture=self.architecture)


@dataclass(eq=False)
class GradientSet(LayerArrays):
    @classmethod
    def zeros_like(cls, params: LayerArrays) -> GradientSet:
        return cls(
            weights=[np.zeros_like(w) for w in params.weights],
            biases=[np.zeros_like(b) for b in params.biases],
        )


def check_congruent(params: LayerArrays, grads: LayerArrays) -> None:
    if params.shapes() != grads.shapes():
        raise ChorusError(
            code="shape_mismatch",
            technical=f"gradient shapes {grads.shapes()} do not match parameters {params.shapes()}",
        )


def init_parameters(arch: MlpArchitecture, seed: int) -> MlpParameters:
    rng = np.random.default_rng(seed)
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for fan_in, fan_out in arch.layer_shapes():
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpParameters(weights=weights, biases=biases, architecture=arch)


def _activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(kind: Activation, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


def _check_inputs(params: MlpParameters, inputs: object) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    expected = params.architecture.input_dim
    if x.ndim not in (1, 2) or x.shape[-1] != expected:
        raise ChorusError(
            code="dimension_mismatch",
            technical=f"expected inputs with {expected} features, got shape {x.shape}",
        )
    if not np.all(np.isfinite(x)):
        raise ChorusError(code="invalid_input", technical="inputs must be finite")
    return x


def _forward_trace(params: MlpParameters, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    kind = params.architecture.activation
    activations = [x]
    pre_activations: list[np.ndarray] = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = activations[-1] @ w + b
        pre_activations.append(z)
        if i < last:
            activations.append(_activate(kind, z))
    return pre_activations, activations


def forward(params: MlpParameters, inputs: object) -> np.ndarray:
    x = _check_inputs(params, inputs)
    pre_activations, _ = _forward_trace(params, x)
    return pre_activations[-1]


def predict_proba(params: MlpParameters, inputs: object) -> np.ndarray:
    return softmax(forward(params, inputs))


def predict(params: MlpParameters, inputs: object) -> np.ndarray:
    return np.argmax(forward(params, inputs), axis=-1)


def backward(params: MlpParameters, inputs: object, upstream: object) -> GradientSet:
    x = _check_inputs(params, inputs)
    delta = np.asarray(upstream, dtype=np.float64)
    expected = (*x.shape[:-1], params.architecture.num_classes)
    if delta.shape != expected:
        raise ChorusError(
            code="dimension_mismatch",
            technical=f"upstream gradient must have shape {expected}, got {delta.shape}",
        )

    kind = params.architecture.activation
    pre_activations, activations = _forward_trace(params, x)
    n_layers = len(params.weights)
    grad_w: list[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray] = [np.empty(0)] * n_layers

    for i in range(n_layers - 1, -1, -1):
        a_in = activations[i]
        if x.ndim == 1:
            grad_w[i] = np.outer(a_in, delta)
            grad_b[i] = delta.copy()
        else:
            grad_w[i] = a_in.T @ delta
            grad_b[i] = delta.sum(axis=0)
        if i > 0:
            back = delta @ params.weights[i].T
            delta = back * _activation_grad(kind, pre_activations[i - 1], activations[i])

    return GradientSet(weights=grad_w, biases=grad_b)


def accuracy(params: MlpParameters, inputs: object, labels: object) -> float:
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        return 0.0
    return float(np.mean(predict(params, inputs) == y))


def parameter_distance(a: LayerArrays, b: LayerArrays) -> float:
    check_congruent(a, b)
    return float(np.linalg.norm(a.flat() - b.flat()))
