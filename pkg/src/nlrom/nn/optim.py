"""AdamW and Adamax acting in place on lists of arrays."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class OptimizerConfig:
    kind: str = "adamw"  # "adamw" | "adamax"
    lr: float = 1e-4
    weight_decay: float = 1e-2
    beta1: float = 0.99
    beta2: float = 0.999
    eps: float = 1e-8

    def to_dict(self) -> dict:
        return asdict(self)

    def build(self, params):
        cls = {"adamw": AdamW, "adamax": Adamax}.get(self.kind)
        if cls is None:
            raise ValueError(f"unknown optimizer {self.kind!r}")
        return cls(params, lr=self.lr, betas=(self.beta1, self.beta2), eps=self.eps,
                   weight_decay=self.weight_decay)


class _Optimizer:
    def __init__(self, params, lr, betas, eps, weight_decay):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = (float(b) for b in betas)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ValueError("one gradient per parameter expected")
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            self._update(p, g, m, v)


class AdamW(_Optimizer):
    """Adam with decoupled weight decay: p <- p (1 - lr wd), then the Adam step."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-2):
        super().__init__(params, lr, betas, eps, weight_decay)

    def _update(self, p, g, m, v):
        if self.weight_decay:
            p *= 1.0 - self.lr * self.weight_decay
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * (g * g)
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class Adamax(_Optimizer):
    """Infinity-norm Adam: u <- max(beta2 u, |g|), p <- p - lr/(1 - beta1^t) m / (u + eps).

    ``weight_decay`` (default 0) is added to the gradient, L2 style.
    """

    def __init__(self, params, lr=2e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        super().__init__(params, lr, betas, eps, weight_decay)

    def _update(self, p, g, m, u):
        if self.weight_decay:
            g = g + self.weight_decay * p
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        np.maximum(self.beta2 * u, np.abs(g), out=u)
        p -= (self.lr / (1.0 - self.beta1**self.t)) * m / (u + self.eps)
