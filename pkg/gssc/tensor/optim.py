"""
Adaptive-moment optimizer over a ParamSet.
"""

import numpy as np

from ..core.errors import NumericError
from .params import ParamSet


class AdamOptimizer:
    """Adam with optional decoupled weight decay."""

    def __init__(self, params: ParamSet, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        for name, tensor in self.params.items():
            grad = tensor.grad
            if grad is None:
                continue
            if not np.all(np.isfinite(grad)):
                raise NumericError(f"non-finite gradient for '{name}'", details={"step": self.t})
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad ** 2
            m_hat = self.m[name] / (1 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1 - self.beta2 ** self.t)
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                update = update + self.lr * self.weight_decay * tensor.data
            tensor.data = (tensor.data - update).astype(tensor.dtype)

    def zero_grad(self) -> None:
        self.params.zero_grad()
