"""Optimizers. Adamax is the one both networks use; Adam and SGD exist for comparison runs."""

from __future__ import annotations

import numpy as np

U_GUARD = 1e-8


class Optimizer:
    def __init__(self, lr: float):
        self.lr = float(lr)
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update ``params`` in place."""
        raise NotImplementedError


class Adamax(Optimizer):
    """Infinity-norm Adam variant.

    Per element: ``m = b1*m + (1-b1)*g``, ``u = max(b2*u, |g|)``,
    ``theta -= lr / (1 - b1**t) * m / max(u, 1e-8)``.
    """

    def __init__(self, lr: float = 0.002, beta1: float = 0.9, beta2: float = 0.999):
        super().__init__(lr)
        self.beta1, self.beta2 = beta1, beta2
        self.m: list[np.ndarray] | None = None
        self.u: list[np.ndarray] | None = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.u = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = self.lr / (1 - b1**self.t)
        for p, g, m, u in zip(params, grads, self.m, self.u):
            m *= b1
            m += (1 - b1) * g
            np.maximum(b2 * u, np.abs(g), out=u)
            p -= (step * m / np.maximum(u, U_GUARD)).astype(p.dtype, copy=False)


class Adam(Optimizer):
    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype, copy=False)


class SGD(Optimizer):
    def __init__(self, lr: float = 0.01):
        super().__init__(lr)

    def step(self, params, grads):
        self.t += 1
        for p, g in zip(params, grads):
            p -= (self.lr * g).astype(p.dtype, copy=False)


OPTIMIZERS = {"adamax": Adamax, "adam": Adam, "sgd": SGD}


def make_optimizer(name: str, lr: float | None = None) -> Optimizer:
    try:
        cls = OPTIMIZERS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}") from None
    return cls() if lr is None else cls(lr=lr)
