"""Node sampling: uniform dilated grids, predicted walks, bilinear reads.

Coordinates are (y, x) float pairs in pixel units with the origin at the
center of pixel (0, 0). Reads outside [0, H) x [0, W) return zero, matching
the zero padding used by every spatial op in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import kernels
from . import tensor as T
from .errors import ConfigError
from .nn import Conv2d, Module
from .rng import SplitMix
from .tensor import Tensor, make_node


def grid_side(k: int) -> int:
    side = int(round(math.sqrt(k)))
    if side * side != k:
        raise ConfigError(f"K must be a perfect square, got {k}")
    if side % 2 == 0:
        raise ConfigError(f"K must have an odd side so the center node exists, got {k}")
    return side


def grid_offsets(rate: int, k: int = 9) -> np.ndarray:
    """The (y, x) offsets of a k-node dilated grid, center included. [K, 2]."""
    side = grid_side(k)
    if rate < 1:
        raise ConfigError(f"sampling rate must be >= 1, got {rate}")
    half = side // 2
    steps = (np.arange(side) - half) * rate
    oy, ox = np.meshgrid(steps, steps, indexing="ij")
    return np.stack([oy.reshape(-1), ox.reshape(-1)], axis=-1).astype(np.int64)


def uniform_grid(h: int, w: int, rate: int, k: int = 9) -> np.ndarray:
    """Absolute sampled coordinates for every position: [H, W, K, 2] ints.

    Border positions index outside the map; such reads resolve to zero at
    sampling time rather than being clamped.
    """
    offs = grid_offsets(rate, k)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    centers = np.stack([yy, xx], axis=-1).astype(np.int64)
    return centers[:, :, None, :] + offs[None, None, :, :]


@dataclass
class SamplingField:
    """Sampled coordinates for one rate set over one feature map.

    base: [H, W, S, K, 2] integer positions from the uniform grids.
    walks: per rate, [N, HW*K, 2] predicted offsets (Tensors, differentiable).
    resolved: per rate, [N, HW*K, 2] = base + walk (Tensors).
    """

    rates: List[int]
    k: int
    height: int
    width: int
    base: np.ndarray
    walks: List[Tensor]
    resolved: List[Tensor]

    def resolved_numpy(self, rate_index: int) -> np.ndarray:
        return self.resolved[rate_index].data.reshape(-1, self.height, self.width, self.k, 2)


class WalkPredictor(Module):
    """One 3x3 conv per rate (dilation = rate) emitting a (dy, dx) walk per node.

    Weights and biases start at zero so the resolved coordinates equal the
    uniform grid until training moves them.
    """

    def __init__(self, channels: int, rates: List[int], k: int, rng: SplitMix):
        grid_side(k)
        self.rates = list(rates)
        self.k = k
        self.convs = [
            Conv2d(channels, 2 * k, 3, rng, padding=r, dilation=r, zero_init=True)
            for r in self.rates
        ]

    def forward(self, feat: Tensor) -> List[Tensor]:
        """Per rate: walks as [N, HW*K, 2], channel layout (node, dy/dx)."""
        n, _, h, w = feat.shape
        out = []
        for conv in self.convs:
            raw = conv(feat)  # [N, 2K, H, W]
            walk = T.reshape(raw, (n, self.k, 2, h, w))
            walk = T.transpose(walk, (0, 3, 4, 1, 2))  # [N, H, W, K, 2]
            out.append(T.reshape(walk, (n, h * w * self.k, 2)))
        return out

    __call__ = forward


def predict_walks(feat: Tensor, predictor: WalkPredictor) -> SamplingField:
    """Uniform grids plus predicted walks for every rate of the predictor."""
    n, _, h, w = feat.shape
    base = np.stack([uniform_grid(h, w, r, predictor.k) for r in predictor.rates], axis=2)
    walks = predictor(feat)
    resolved = []
    for i in range(len(predictor.rates)):
        flat_base = base[:, :, i].reshape(1, h * w * predictor.k, 2).astype(np.float64)
        resolved.append(T.add(walks[i], Tensor(flat_base)))
    return SamplingField(
        rates=list(predictor.rates),
        k=predictor.k,
        height=h,
        width=w,
        base=base,
        walks=walks,
        resolved=resolved,
    )


def bilinear_sample(fmap: Tensor, coords) -> Tensor:
    """Differentiable 4-corner interpolation of an NCHW map at [N, P, 2]
    float coordinates; output [N, P, C]. Gradients flow to the map and to
    the coordinates, which is what lets walk predictors learn."""
    fmap = fmap if isinstance(fmap, Tensor) else Tensor(fmap)
    coords = coords if isinstance(coords, Tensor) else Tensor(coords)
    out_data = kernels.bilinear_forward(fmap.data, coords.data)

    def back(g):
        gmap, gcoords = kernels.bilinear_backward(fmap.data, coords.data, np.ascontiguousarray(g))
        if fmap.requires_grad:
            T._accumulate(fmap, gmap)
        if coords.requires_grad:
            T._accumulate(coords, gcoords)

    return make_node(out_data, (fmap, coords), back)


def full_coverage_field(n: int, h: int, w: int) -> SamplingField:
    """A field whose K = H*W nodes for every query are all map positions.

    Used to compare sampled attention against its dense counterpart; not
    reachable through uniform grids, which are query-centered.
    """
    k = h * w
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    all_pos = np.stack([yy.reshape(-1), xx.reshape(-1)], axis=-1)  # [HW, 2]
    base = np.broadcast_to(all_pos[None, None], (h, w, k, 2)).astype(np.int64)
    base = base[:, :, None, :, :].copy()  # [H, W, S=1, K, 2]
    flat = base[:, :, 0].reshape(1, h * w * k, 2).astype(np.float64)
    flat = np.broadcast_to(flat, (n, h * w * k, 2)).copy()
    walks = [Tensor(np.zeros((n, h * w * k, 2)))]
    resolved = [Tensor(flat)]
    return SamplingField(
        rates=[1], k=k, height=h, width=w, base=base, walks=walks, resolved=resolved
    )


def field_records(
    field: SamplingField,
    weights: Optional[np.ndarray] = None,
    batch_index: int = 0,
) -> List[dict]:
    """Flat export records {y, x, rate, node_index, sampled_y, sampled_x, weight}.

    ``weights`` is [S, H, W, K] (affinity or attention mass per node); ones
    are reported when omitted.
    """
    records = []
    for si, rate in enumerate(field.rates):
        res = field.resolved_numpy(si)[batch_index]  # [H, W, K, 2]
        for y in range(field.height):
            for x in range(field.width):
                for j in range(field.k):
                    wgt = 1.0 if weights is None else float(weights[si, y, x, j])
                    records.append(
                        {
                            "y": y,
                            "x": x,
                            "rate": rate,
                            "node_index": j,
                            "sampled_y": float(res[y, x, j, 0]),
                            "sampled_x": float(res[y, x, j, 1]),
                            "weight": wgt,
                        }
                    )
    return records
