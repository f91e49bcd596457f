"""Parameter containers and the standard layers built from tensor ops."""

from __future__ import annotations

from typing import Iterator, List, Tuple

import numpy as np

from . import tensor as T
from .rng import SplitMix
from .tensor import Tensor


class Module(object):
    """Minimal parameter container. Attributes holding Tensors with
    requires_grad, Modules, or lists of Modules are discovered by walking
    the instance dict in insertion order, so traversal is deterministic."""

    training = False

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in self.__dict__.items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self.__dict__.items():
            full = f"{prefix}{name}"
            if isinstance(value, np.ndarray):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{full}.{i}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in self.__dict__.values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def set_training(self, mode: bool):
        for m in self.modules():
            m.training = mode
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        for name, buf in self.named_buffers():
            state[name] = buf.copy()
        return state

    def load_state_dict(self, state: dict):
        for name, p in self.named_parameters():
            p.data[...] = state[name]
        for name, buf in self.named_buffers():
            buf[...] = state[name]


def param(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def trunc_normal(shape, rng: SplitMix, std: float = 0.02) -> Tensor:
    return param(rng.truncated_normal(shape, std=std))


class Conv2d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        rng: SplitMix,
        stride: int = 1,
        padding: int = 0,
        dilation: int = 1,
        groups: int = 1,
        bias: bool = True,
        zero_init: bool = False,
    ):
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        self.groups = groups
        wshape = (out_ch, in_ch // groups, kernel, kernel)
        self.weight = param(np.zeros(wshape)) if zero_init else trunc_normal(wshape, rng)
        self.bias = param(np.zeros(out_ch)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(
            x,
            self.weight,
            self.bias,
            stride=self.stride,
            padding=self.padding,
            dilation=self.dilation,
            groups=self.groups,
        )

    __call__ = forward


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: SplitMix, zero_init: bool = False):
        wshape = (in_dim, out_dim)
        self.weight = param(np.zeros(wshape)) if zero_init else trunc_normal(wshape, rng)
        self.bias = param(np.zeros(out_dim))

    def forward(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.weight), self.bias)

    __call__ = forward


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, axis: int = -1):
        self.gamma = param(np.ones(dim))
        self.beta = param(np.zeros(dim))
        self.eps = eps
        self.axis = axis

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, eps=self.eps, axis=self.axis)

    __call__ = forward


class BatchNorm2d(Module):
    def __init__(self, ch: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = param(np.ones(ch))
        self.beta = param(np.zeros(ch))
        self.running_mean = np.zeros(ch)
        self.running_var = np.ones(ch)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )

    __call__ = forward


def randomize_parameters(module: Module, rng: SplitMix, scale: float = 0.3):
    """Overwrite every parameter with small random values.

    Used by gradient checks: default init deliberately zeroes message scales
    and walk predictors, which blocks gradient flow through paths the checks
    must exercise.
    """
    for _, p in module.named_parameters():
        p.data[...] = rng.normal(p.data.shape) * scale
