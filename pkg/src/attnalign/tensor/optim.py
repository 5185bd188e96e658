"""Adam with inverse square-root warmup, plus plain gradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .core import Tensor


@dataclass
class OptimizerState:
    """Moment buffers and schedule for a fixed list of parameters."""

    peak_lr: float = 1e-3
    warmup_steps: int = 0
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def learning_rate(self, step: int | None = None) -> float:
        """Linear warmup to ``peak_lr`` then decay with 1/sqrt(step)."""
        step = self.step if step is None else step
        step = max(step, 1)
        if self.warmup_steps <= 0:
            return self.peak_lr
        return self.peak_lr * min(step / self.warmup_steps, (self.warmup_steps / step) ** 0.5)


def adam_step(params: list[Tensor], state: OptimizerState, lr: float | None = None) -> None:
    """One bias-corrected Adam update, in place.

    ``lr`` overrides the schedule of ``state`` for this step.
    """
    missing = [i for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise ContractError(f"adam_step: parameters {missing} have no gradient")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ContractError("adam_step: optimizer state was built for a different parameter list")
    state.step += 1
    rate = state.learning_rate() if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (rate * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)


class Adam:
    """Convenience wrapper holding parameters together with their state."""

    def __init__(self, params, lr: float = 1e-3, warmup_steps: int = 0,
                 betas=(0.9, 0.98), eps: float = 1e-9):
        self.params = list(params)
        self.state = OptimizerState(peak_lr=lr, warmup_steps=warmup_steps,
                                    beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, self.state)


def sgd_step(params: list[Tensor], lr: float) -> None:
    """Fixed-size gradient descent step, in place."""
    for p in params:
        if p.grad is None:
            raise ContractError("sgd_step: parameter has no gradient")
        p.data -= (lr * p.grad).astype(p.data.dtype)
