"""Dynamic message passing over sampled nodes with predicted filters and
affinities, plus the residual update that refines the input feature map."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .nn import Conv2d, Module, param
from .rng import SplitMix
from .sampler import SamplingField, WalkPredictor, bilinear_sample, grid_side, predict_walks
from .tensor import Tensor


@dataclass
class DgmnConfig:
    """Hyper-parameters of one module instance.

    channels: feature width C. rates: dilations of the uniform grids, one
    message branch per rate. k: sampled nodes per rate (odd square). groups:
    filter groups G, each scaling a contiguous block of C/G channels.
    iters: message-update iterations T.
    """

    channels: int
    rates: List[int] = field(default_factory=lambda: [1])
    k: int = 9
    groups: int = 4
    iters: int = 1

    def __post_init__(self):
        grid_side(self.k)
        if self.channels % self.groups != 0:
            raise ConfigError(f"groups={self.groups} must divide channels={self.channels}")
        if self.iters < 1:
            raise ConfigError(f"iters must be >= 1, got {self.iters}")
        if not self.rates:
            raise ConfigError("at least one sampling rate is required")


@dataclass
class DynamicKernel:
    """Per-position node filters and normalized affinities for one rate.

    weights: [N, H, W, K, G]; affinities: [N, H, W, K], rows sum to one.
    """

    weights: Tensor
    affinities: Tensor


class KernelPredictor(Module):
    """3x3 conv (dilation = rate) emitting K*G filter scalars and K affinity
    logits per position; logits are softmax-normalized over the K nodes."""

    def __init__(self, cfg: DgmnConfig, rate: int, rng: SplitMix):
        self.k = cfg.k
        self.groups = cfg.groups
        self.conv = Conv2d(cfg.channels, cfg.k * cfg.groups + cfg.k, 3, rng, padding=rate, dilation=rate)

    def forward(self, feat: Tensor) -> DynamicKernel:
        n, _, h, w = feat.shape
        raw = self.conv(feat)  # [N, K*G + K, H, W]
        if raw.shape[1] != self.k * self.groups + self.k:
            raise ShapeError(
                f"kernel head produced {raw.shape[1]} channels, expected {self.k * self.groups + self.k}"
            )
        wpart = T.narrow(raw, 1, 0, self.k * self.groups)
        apart = T.narrow(raw, 1, self.k * self.groups, self.k)
        weights = T.reshape(wpart, (n, self.k, self.groups, h, w))
        weights = T.transpose(weights, (0, 3, 4, 1, 2))  # [N, H, W, K, G]
        logits = T.transpose(apart, (0, 2, 3, 1))  # [N, H, W, K]
        return DynamicKernel(weights=weights, affinities=T.softmax(logits, axis=-1))

    __call__ = forward


def predict_dynamic_kernel(feat: Tensor, predictor: KernelPredictor) -> DynamicKernel:
    return predictor(feat)


def dmc(
    feat: Tensor,
    field_: SamplingField,
    kernel: DynamicKernel,
    rate_index: int,
    groups: int,
) -> Tensor:
    """Message map for one rate: affinity-weighted sum over sampled nodes of
    the bilinear-read feature scaled by the node's group filter."""
    n, c, h, w = feat.shape
    k = field_.k
    sampled = bilinear_sample(feat, field_.resolved[rate_index])  # [N, HW*K, C]
    cg = c // groups
    grouped = T.reshape(sampled, (n, h * w, k, groups, cg))
    wexp = T.reshape(kernel.weights, (n, h * w, k, groups, 1))
    scaled = T.mul(grouped, wexp)
    aff = T.reshape(kernel.affinities, (n, h * w, k))
    msg = T.einsum2("npk,npkgc->npgc", aff, scaled)
    msg = T.reshape(msg, (n, h, w, c))
    return T.transpose(msg, (0, 3, 1, 2))


class DgmnModule(Module):
    """Multi-rate dynamic message calculation with a residual ReLU update.

    Message weights beta start at 1/S and the per-channel update scale alpha
    starts at zero, so a fresh module is identity-plus-ReLU.
    """

    def __init__(self, cfg: DgmnConfig, rng: SplitMix):
        self.cfg = cfg
        self.walks = WalkPredictor(cfg.channels, cfg.rates, cfg.k, rng)
        self.kernels = [KernelPredictor(cfg, r, rng) for r in cfg.rates]
        self.beta = param(np.full(len(cfg.rates), 1.0 / len(cfg.rates)))
        self.alpha = param(np.zeros(cfg.channels))

    def messages(self, feat: Tensor) -> Tuple[Tensor, SamplingField, List[DynamicKernel]]:
        field_ = predict_walks(feat, self.walks)
        kernels_ = [k(feat) for k in self.kernels]
        total: Optional[Tensor] = None
        for i in range(len(self.cfg.rates)):
            m = dmc(feat, field_, kernels_[i], i, self.cfg.groups)
            m = T.mul(m, T.reshape(T.narrow(self.beta, 0, i, 1), (1, 1, 1, 1)))
            total = m if total is None else T.add(total, m)
        return total, field_, kernels_

    def forward(self, obs: Tensor, capture: Optional[list] = None) -> Tensor:
        state = obs
        alpha = T.reshape(self.alpha, (1, self.cfg.channels, 1, 1))
        for _ in range(self.cfg.iters):
            msg, field_, kernels_ = self.messages(state)
            state = T.relu(T.add(obs, T.mul(alpha, msg)))
            if capture is not None:
                capture.append(
                    {
                        "field": field_,
                        "affinities": [k.affinities.data.copy() for k in kernels_],
                    }
                )
        return state

    __call__ = forward


def dgmn_forward(obs: Tensor, module: DgmnModule) -> Tensor:
    return module(obs)
