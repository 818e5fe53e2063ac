from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from chorus.diagnostics import ChorusError
from chorus.model import GradientSet, MlpParameters, check_congruent


def _check_gradients(params: MlpParameters, grads: GradientSet) -> None:
    check_congruent(params, grads)
    if not grads.is_finite():
        raise ChorusError(code="diverged", technical="diverged: gradient has non-finite entries")


def _check_result(updated: MlpParameters) -> MlpParameters:
    if not updated.is_finite():
        raise ChorusError(code="diverged", technical="diverged: update produced non-finite parameters")
    return updated


def sgd_step(params: MlpParameters, grads: GradientSet, lr: float) -> MlpParameters:
    _check_gradients(params, grads)
    weights = [w - lr * g for w, g in zip(params.weights, grads.weights)]
    biases = [b - lr * g for b, g in zip(params.biases, grads.biases)]
    return _check_result(params.with_arrays(weights, biases))


@dataclass
class AdamState:
    first_moment: GradientSet
    second_moment: GradientSet
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(
        cls,
        params: MlpParameters,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> AdamState:
        return cls(
            first_moment=GradientSet.zeros_like(params),
            second_moment=GradientSet.zeros_like(params),
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(
    params: MlpParameters,
    grads: GradientSet,
    state: AdamState,
    lr: float,
) -> tuple[MlpParameters, AdamState]:
    _check_gradients(params, grads)
    check_congruent(params, state.first_moment)
    b1, b2, eps = state.beta1, state.beta2, state.eps
    t = state.step + 1
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t

    def update(theta: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m_new / correction1
        v_hat = v_new / correction2
        return theta - lr * m_hat / (np.sqrt(v_hat) + eps), m_new, v_new

    new_w, new_b = [], []
    m_w, m_b, v_w, v_b = [], [], [], []
    for i in range(len(params.weights)):
        w, mw, vw = update(
            params.weights[i],
            grads.weights[i],
            state.first_moment.weights[i],
            state.second_moment.weights[i],
        )
        b, mb, vb = update(
            params.biases[i],
            grads.biases[i],
            state.first_moment.biases[i],
            state.second_moment.biases[i],
        )
        new_w.append(w)
        new_b.append(b)
        m_w.append(mw)
        m_b.append(mb)
        v_w.append(vw)
        v_b.append(vb)

    new_state = AdamState(
        first_moment=GradientSet(weights=m_w, biases=m_b),
        second_moment=GradientSet(weights=v_w, biases=v_b),
        step=t,
        beta1=b1,
        beta2=b2,
        eps=eps,
    )
    return _check_result(params.with_arrays(new_w, new_b)), new_state


class Optimizer(Protocol):
    def step(self, params: MlpParameters, grads: GradientSet) -> MlpParameters: ...


@dataclass
class Sgd:
    lr: float = 1e-3

    def step(self, params: MlpParameters, grads: GradientSet) -> MlpParameters:
        return sgd_step(params, grads, self.lr)


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: AdamState | None = field(default=None, repr=False)

    def step(self, params: MlpParameters, grads: GradientSet) -> MlpParameters:
        if self.state is None:
            self.state = AdamState.zeros_like(params, self.beta1, self.beta2, self.eps)
        params, self.state = adam_step(params, grads, self.state, self.lr)
        return params


OPTIMIZERS = ("adam", "sgd")


def make_optimizer(
    name: str,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Optimizer:
    if name == "adam":
        return Adam(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    if name == "sgd":
        return Sgd(lr=lr)
    raise ChorusError(
        code="invalid_config_value",
        technical=f"unknown optimizer `{name}`; expected one of {', '.join(OPTIMIZERS)}",
    )
