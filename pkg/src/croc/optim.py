"""Adam with bias correction, operating on Parameter objects in place."""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter


class Adam:
    """Standard Adam update; deterministic given the gradient sequence.

    beta1/beta2/eps follow the usual defaults. State arrays are keyed by
    parameter identity, one first and one second moment per parameter.
    """

    def __init__(self, params: list[Parameter], learning_rate: float = 0.003,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.value -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
