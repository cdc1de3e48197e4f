"""Adam optimizer on a flat parameter vector."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam with bias correction; defaults lr=1e-3, betas=(0.9, 0.999), eps=1e-8."""

    def __init__(self, n_params: int, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1, self.beta2 = map(float, betas)
        self.eps = float(eps)
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Update ``params`` in place and return it."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return params

    def state(self) -> dict:
        return {"t": self.t, "m": self.m.copy(), "v": self.v.copy(), "lr": self.lr}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = np.array(state["m"], dtype=float)
        self.v = np.array(state["v"], dtype=float)
