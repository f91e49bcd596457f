"""Sampled key/value attention block: the message passing layer recast as a
linear-complexity Transformer with walks, relative position bias, scaled
residuals and a feed-forward tail."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .nn import Conv2d, LayerNorm, Module, param, trunc_normal
from .rng import SplitMix
from .sampler import SamplingField, WalkPredictor, bilinear_sample, grid_side, predict_walks
from .tensor import Tensor, make_node


@dataclass
class Dgmn2Config:
    """One attention block instance.

    dim: embedding width d (divisible by heads). k: sampled nodes per rate.
    rates: sampling dilations (single rate by default). ffn_ratio: hidden
    expansion of the feed-forward tail. pos_grid: the grid extent the
    relative-position tables are sized for; the table covers offsets up to
    +-(pos_grid - 1) and larger maps are handled by rescaling offsets into
    the table. scale: attention logit scale, defaults to 1/sqrt(dim/heads).
    """

    dim: int
    heads: int = 1
    k: int = 9
    rates: List[int] = field(default_factory=lambda: [1])
    ffn_ratio: int = 4
    pos_grid: int = 8
    scale: Optional[float] = None

    def __post_init__(self):
        grid_side(self.k)
        if self.dim % self.heads != 0:
            raise ConfigError(f"heads={self.heads} must divide dim={self.dim}")
        if self.pos_grid < 1:
            raise ConfigError(f"pos_grid must be >= 1, got {self.pos_grid}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def logit_scale(self) -> float:
        return self.scale if self.scale is not None else 1.0 / math.sqrt(self.head_dim)


def _interp_tables(table: Tensor, pos) -> Tensor:
    """Clamped linear interpolation of [H, R] tables at flat positions [M].

    Positions are table-relative offsets; index 0 holds offset -(R-1)/2.
    Integer in-range positions return table entries exactly; positions past
    the ends clamp to the edge entries. Differentiable in both arguments.
    """
    pos_t = pos if isinstance(pos, Tensor) else Tensor(np.asarray(pos, dtype=np.float64))
    r = table.shape[1]
    center = (r - 1) / 2.0
    raw = pos_t.data + center
    clamped = np.clip(raw, 0.0, r - 1.0)
    lo = np.minimum(np.floor(clamped), r - 2).astype(np.int64)
    frac = clamped - lo
    out_data = table.data[:, lo] * (1.0 - frac) + table.data[:, lo + 1] * frac
    in_range = (raw > 0.0) & (raw < r - 1.0)

    def back(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            heads_idx = np.arange(table.data.shape[0])[:, None]
            np.add.at(gt, (heads_idx, lo[None, :]), g * (1.0 - frac))
            np.add.at(gt, (heads_idx, lo[None, :] + 1), g * frac)
            T._accumulate(table, gt)
        if pos_t.requires_grad:
            slope = table.data[:, lo + 1] - table.data[:, lo]
            T._accumulate(pos_t, np.sum(g * slope, axis=0) * in_range)

    return make_node(out_data, (table, pos_t), back)


class RelPosTable(Module):
    """Two 1-D learnable tables per head (height and width), combined
    additively into a logit bias for a continuous relative offset."""

    def __init__(self, heads: int, pos_grid: int, rng: SplitMix):
        self.pos_grid = pos_grid
        self.extent = 2 * pos_grid - 1
        self.table_y = trunc_normal((heads, self.extent), rng)
        self.table_x = trunc_normal((heads, self.extent), rng)

    def bias(self, dy, dx, current_grid: Optional[int] = None) -> Tensor:
        """Bias [heads, M] for flat offset arrays/Tensors dy, dx.

        When the running grid is larger than the design grid, offsets are
        shrunk by (pos_grid - 1)/(current_grid - 1), which stretches the
        stored encoding over the larger map.
        """
        if current_grid is not None and current_grid > self.pos_grid and current_grid > 1:
            s = (self.pos_grid - 1.0) / (current_grid - 1.0)
            dy = T.scale(dy, s) if isinstance(dy, Tensor) else dy * s
            dx = T.scale(dx, s) if isinstance(dx, Tensor) else dx * s
        return T.add(_interp_tables(self.table_y, dy), _interp_tables(self.table_x, dx))


def relpos_bias(offsets, table: RelPosTable, current_grid: Optional[int] = None) -> Tensor:
    """Bias per head for [..., 2] float offsets (resolved minus query)."""
    arr = offsets.data if isinstance(offsets, Tensor) else np.asarray(offsets, dtype=np.float64)
    lead = arr.shape[:-1]
    if isinstance(offsets, Tensor):
        flat = T.reshape(offsets, (-1, 2))
        dy = T.reshape(T.narrow(flat, 1, 0, 1), (int(np.prod(lead)),))
        dx = T.reshape(T.narrow(flat, 1, 1, 1), (int(np.prod(lead)),))
    else:
        dy = arr[..., 0].reshape(-1)
        dx = arr[..., 1].reshape(-1)
    out = table.bias(dy, dx, current_grid)
    return T.reshape(out, (table.table_y.shape[0],) + lead)


def _query_centers(h: int, w: int, k: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    centers = np.stack([yy, xx], axis=-1).reshape(h * w, 1, 2)
    return np.broadcast_to(centers, (h * w, k, 2)).reshape(h * w * k, 2).astype(np.float64)


class Dgmn2Attention(Module):
    """Sampled attention: 1x1 projections for query/key/value, walks from a
    zero-initialized 3x3 conv per rate, per-rate softmax over the K sampled
    nodes, head concat and an output projection."""

    def __init__(self, cfg: Dgmn2Config, rng: SplitMix):
        self.cfg = cfg
        d = cfg.dim
        self.wq = Conv2d(d, d, 1, rng)
        self.wk = Conv2d(d, d, 1, rng)
        self.wv = Conv2d(d, d, 1, rng)
        self.wo = Conv2d(d, d, 1, rng)
        self.walks = WalkPredictor(d, cfg.rates, cfg.k, rng)
        self.relpos = [RelPosTable(cfg.heads, cfg.pos_grid, rng) for _ in cfg.rates]

    def sample(self, feat: Tensor, field_: Optional[SamplingField] = None):
        """Project and sample keys/values: two [N, h, HW, K, d'] tensors per rate."""
        if field_ is None:
            field_ = predict_walks(feat, self.walks)
        n, d, h, w = feat.shape
        heads, dh = self.cfg.heads, self.cfg.head_dim
        kmap = self.wk(feat)
        vmap = self.wv(feat)
        keys, values = [], []
        for i in range(len(field_.rates)):
            coords = field_.resolved[i]
            for src, dst in ((kmap, keys), (vmap, values)):
                s = bilinear_sample(src, coords)  # [N, HW*K, d]
                s = T.reshape(s, (n, h * w, field_.k, heads, dh))
                dst.append(T.transpose(s, (0, 3, 1, 2, 4)))
        return keys, values, field_

    def forward(self, feat: Tensor, field_: Optional[SamplingField] = None, capture: Optional[dict] = None) -> Tensor:
        n, d, h, w = feat.shape
        heads, dh = self.cfg.heads, self.cfg.head_dim
        keys, values, field_ = self.sample(feat, field_)
        q = self.wq(feat)
        q = T.reshape(q, (n, heads, dh, h * w))
        q = T.transpose(q, (0, 1, 3, 2))  # [N, h, HW, d']
        total: Optional[Tensor] = None
        attn_snapshots = []
        for i in range(len(field_.rates)):
            logits = T.scale(T.einsum2("nhpc,nhpkc->nhpk", q, keys[i]), self.cfg.logit_scale)
            centers = _query_centers(h, w, field_.k)
            offsets = T.add(field_.resolved[i], Tensor(-centers[None]))
            bias = relpos_bias(offsets, self.relpos[min(i, len(self.relpos) - 1)], current_grid=max(h, w))
            # bias: [heads, N, HW*K] -> [N, heads, HW, K]
            bias = T.reshape(bias, (heads, n, h * w, field_.k))
            bias = T.transpose(bias, (1, 0, 2, 3))
            attn = T.softmax(T.add(logits, bias), axis=-1)
            msg = T.einsum2("nhpk,nhpkc->nhpc", attn, values[i])
            total = msg if total is None else T.add(total, msg)
            if capture is not None:
                attn_snapshots.append(attn.data.copy())
        total = T.transpose(total, (0, 1, 3, 2))  # [N, h, d', HW]
        total = T.reshape(total, (n, d, h, w))
        if capture is not None:
            capture["field"] = field_
            capture["attention"] = attn_snapshots
        return self.wo(total)

    __call__ = forward


def dgmn2_sample(attn: Dgmn2Attention, feat: Tensor, field_: Optional[SamplingField] = None):
    keys, values, _ = attn.sample(feat, field_)
    return keys, values


def dgmn2_attention(attn: Dgmn2Attention, feat: Tensor, field_: Optional[SamplingField] = None) -> Tensor:
    return attn(feat, field_)


def channel_layer_norm(x: Tensor, ln: LayerNorm) -> Tensor:
    """Layer norm over the channel axis of an NCHW map."""
    moved = T.transpose(x, (0, 2, 3, 1))
    return T.transpose(ln(moved), (0, 3, 1, 2))


class Dgmn2Block(Module):
    """Pre-norm residual layout: attention with a zero-initialized per-channel
    message scale, then the feed-forward block."""

    def __init__(self, cfg: Dgmn2Config, rng: SplitMix):
        self.cfg = cfg
        d = cfg.dim
        self.ln1 = LayerNorm(d)
        self.attn = Dgmn2Attention(cfg, rng)
        self.alpha = param(np.zeros(d))
        self.ln2 = LayerNorm(d)
        self.ffn_in = Conv2d(d, cfg.ffn_ratio * d, 1, rng)
        self.ffn_out = Conv2d(cfg.ffn_ratio * d, d, 1, rng)

    def forward(self, x: Tensor, capture: Optional[dict] = None) -> Tensor:
        msg = self.attn(channel_layer_norm(x, self.ln1), capture=capture)
        alpha = T.reshape(self.alpha, (1, self.cfg.dim, 1, 1))
        y = T.add(x, T.mul(alpha, msg))
        hidden = T.gelu(self.ffn_in(channel_layer_norm(y, self.ln2)))
        return T.add(y, self.ffn_out(hidden))

    __call__ = forward


def dgmn2_block(block: Dgmn2Block, x: Tensor) -> Tensor:
    return block(x)
