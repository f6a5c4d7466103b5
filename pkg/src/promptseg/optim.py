"""First-order adaptive-moment (Adam) updates over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Adam:
    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = [np.zeros_like(p.values) for p in self.params]
        self._v = [np.zeros_like(p.values) for p in self.params]
        self._t = 0

    def step(self) -> None:
        """Apply one update from the gradients currently stored on the params."""
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1.0 - b2**self._t) / (1.0 - b1**self._t)
        for i, p in enumerate(self.params):
            grad = p.grad
            if grad is None:
                continue
            self._m[i] = b1 * self._m[i] + (1.0 - b1) * grad
            self._v[i] = b2 * self._v[i] + (1.0 - b2) * grad * grad
            p.values -= scale * self._m[i] / (np.sqrt(self._v[i]) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
