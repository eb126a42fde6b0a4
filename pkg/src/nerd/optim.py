"""Adam with bias correction, plus a thin multi-parameter wrapper."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import TrainingError


@dataclass
class AdamState:
    """Per-parameter moment buffers and step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 1e-4

    @classmethod
    def for_param(cls, param: Tensor, learning_rate: float = 1e-4,
                  beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros_like(param.data), v=np.zeros_like(param.data),
                   beta1=beta1, beta2=beta2, epsilon=epsilon, learning_rate=learning_rate)


def adam_step(param: Tensor, grad: np.ndarray, state: AdamState) -> AdamState:
    """Apply one Adam update in place.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2;  hat values divide out the
    (1 - b^t) warm-up bias;  param <- param - lr * m_hat / (sqrt(v_hat) + eps).
    """
    if grad.shape != param.data.shape:
        raise TrainingError(f"gradient shape {grad.shape} does not match parameter {param.data.shape}")
    if not np.isfinite(grad).all():
        raise TrainingError(
            f"non-finite gradient for parameter {param.name or '<unnamed>'} at step {state.t + 1}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * np.square(grad)
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    param.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


@dataclass
class Adam:
    """Adam over a list of named parameters sharing one learning rate."""

    params: list[Tensor]
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    states: dict[int, AdamState] = field(default_factory=dict)

    def __post_init__(self):
        for p in self.params:
            self.states[id(p)] = AdamState.for_param(
                p, self.learning_rate, self.beta1, self.beta2, self.epsilon)

    def set_learning_rate(self, lr: float) -> None:
        self.learning_rate = lr
        for s in self.states.values():
            s.learning_rate = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                continue
            adam_step(p, p.grad, self.states[id(p)])

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
