"""Gradient-descent optimizers over named parameter sets.

Both minimize: step() moves parameters against their .grad.  Parameters
whose grad is None are left untouched, and Adam keeps a per-name step
count so skipped parameters keep an honest bias correction.
"""

from __future__ import annotations

import numpy as np


class Sgd:
    def __init__(self, lr: float):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.lr = lr

    def step(self, params):
        for _, p in params.items():
            if p.grad is None:
                continue
            p.data -= self.lr * p.grad


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._state = {}

    def step(self, params):
        for name, p in params.items():
            if p.grad is None:
                continue
            m, v, t = self._state.get(
                name, (np.zeros_like(p.data), np.zeros_like(p.data), 0)
            )
            t += 1
            m = self.beta1 * m + (1.0 - self.beta1) * p.grad
            v = self.beta2 * v + (1.0 - self.beta2) * p.grad**2
            self._state[name] = (m, v, t)
            mhat = m / (1.0 - self.beta1**t)
            vhat = v / (1.0 - self.beta2**t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
