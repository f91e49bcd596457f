"""Parameter update rules. Functional cores plus thin stateful wrappers."""

from __future__ import annotations

import math
from typing import Iterable, List

import numpy as np

from .tensor import Tensor


def adamw_step(p, g, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=5e-2):
    """One decoupled-weight-decay Adam update, in place on p/m/v."""
    p -= lr * weight_decay * p
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def sgd_step(p, g, buf, lr, momentum=0.0, weight_decay=0.0):
    """One SGD update with optional momentum, in place on p/buf."""
    if weight_decay:
        g = g + weight_decay * p
    if momentum:
        buf *= momentum
        buf += g
        g = buf
    p -= lr * g


class AdamW(object):
    def __init__(self, params: Iterable[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=5e-2):
        self.params: List[Tensor] = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr=None):
        self.t += 1
        lr = self.lr if lr is None else lr
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            adamw_step(p.data, g, m, v, self.t, lr, self.beta1, self.beta2, self.eps, self.weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class SGD(object):
    def __init__(self, params: Iterable[Tensor], lr=1e-2, momentum=0.0, weight_decay=0.0):
        self.params: List[Tensor] = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buf = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        for p, buf in zip(self.params, self.buf):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            sgd_step(p.data, g, buf, lr, self.momentum, self.weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def cosine_lr(base_lr: float, step: int, total: int) -> float:
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * min(step, total) / total))
