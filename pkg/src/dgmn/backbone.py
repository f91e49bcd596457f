"""Four-stage pyramidal backbone built from attention blocks.

Variants share dims (64, 128, 320, 512), heads (1, 2, 5, 8) and feed-forward
expansions (8, 8, 4, 4) and differ only in per-stage depth. Classification
mode downsamples to strides (4, 8, 16, 32); dense mode keeps the last two
patch embeddings at stride 1 for strides (4, 8, 8, 8) while using the exact
same parameter set, so checkpoints move between modes losslessly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Tuple

from . import tensor as T
from .dgmn2 import Dgmn2Block, Dgmn2Config, channel_layer_norm
from .errors import ConfigError, ShapeError
from .nn import BatchNorm2d, Conv2d, LayerNorm, Linear, Module
from .rng import SplitMix
from .tensor import Tensor

DIMS = (64, 128, 320, 512)
HEADS = (1, 2, 5, 8)
EXPANSIONS = (8, 8, 4, 4)
DEPTHS = {
    "Tiny": (2, 2, 2, 2),
    "Small": (3, 4, 6, 3),
    "Medium": (3, 4, 18, 3),
    "Large": (3, 8, 27, 3),
}
MODES = ("classify", "dense")


@dataclass
class BackboneSpec:
    variant: str
    depths: Tuple[int, int, int, int]
    dims: Tuple[int, int, int, int] = DIMS
    heads: Tuple[int, int, int, int] = HEADS
    expansions: Tuple[int, int, int, int] = EXPANSIONS
    mode: str = "classify"

    @property
    def strides(self) -> Tuple[int, int, int, int]:
        return (4, 8, 16, 32) if self.mode == "classify" else (4, 8, 8, 8)


def backbone_spec(variant: str, mode: str = "classify") -> BackboneSpec:
    if variant not in DEPTHS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(DEPTHS)}")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    return BackboneSpec(variant=variant, depths=DEPTHS[variant], mode=mode)


class ConvBnRelu(Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int, rng: SplitMix):
        self.conv = Conv2d(in_ch, out_ch, 3, rng, stride=stride, padding=1)
        self.bn = BatchNorm2d(out_ch)

    def forward(self, x: Tensor) -> Tensor:
        return T.relu(self.bn(self.conv(x)))

    __call__ = forward


class PatchEmbedStem(Module):
    """Three 3x3 conv-bn-relu units at strides 2, 1, 2: images to stride 4."""

    def __init__(self, in_ch: int, out_ch: int, rng: SplitMix):
        self.units = [
            ConvBnRelu(in_ch, out_ch, 2, rng),
            ConvBnRelu(out_ch, out_ch, 1, rng),
            ConvBnRelu(out_ch, out_ch, 2, rng),
        ]

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ShapeError(f"stem needs spatial extents divisible by 4, got {x.shape}")
        for unit in self.units:
            x = unit(x)
        return x

    __call__ = forward


class PatchEmbedDown(Module):
    """One 3x3 conv-bn-relu unit; stride 2 normally, 1 in dense mode."""

    def __init__(self, in_ch: int, out_ch: int, stride: int, rng: SplitMix):
        if stride not in (1, 2):
            raise ConfigError(f"patch embedding stride must be 1 or 2, got {stride}")
        self.unit = ConvBnRelu(in_ch, out_ch, stride, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.unit(x)

    __call__ = forward


def patch_embed_stem(x: Tensor, stem: PatchEmbedStem) -> Tensor:
    return stem(x)


def patch_embed_down(x: Tensor, embed: PatchEmbedDown) -> Tensor:
    return embed(x)


class Stage(Module):
    def __init__(self, embed: Module, blocks: List[Dgmn2Block], dim: int):
        self.embed = embed
        self.blocks = blocks
        self.norm = LayerNorm(dim)

    def forward(self, x: Tensor, captures: Optional[list] = None) -> Tensor:
        x = self.embed(x)
        for i, block in enumerate(self.blocks):
            cap = {} if captures is not None and i == len(self.blocks) - 1 else None
            x = block(x, capture=cap)
            if cap is not None:
                cap["input_hw"] = (x.shape[2], x.shape[3])
                captures.append(cap)
        return channel_layer_norm(x, self.norm)

    __call__ = forward


class Backbone(Module):
    def __init__(self, spec: BackboneSpec, num_classes: int, input_size: int, rng: SplitMix):
        self.spec = spec
        self.num_classes = num_classes
        self.input_size = input_size
        stages: List[Stage] = []
        prev = 3
        for i in range(4):
            stride_in = 2 if spec.mode == "classify" or i < 2 else 1
            if i == 0:
                embed: Module = PatchEmbedStem(prev, spec.dims[i], rng)
            else:
                embed = PatchEmbedDown(prev, spec.dims[i], stride_in, rng)
            # Tables are sized for the classification pretraining grid of the
            # stage regardless of mode, so the parameter sets stay identical.
            pretrain_grid = max(1, input_size // (4, 8, 16, 32)[i])
            cfg = Dgmn2Config(
                dim=spec.dims[i],
                heads=spec.heads[i],
                ffn_ratio=spec.expansions[i],
                pos_grid=pretrain_grid,
            )
            blocks = [Dgmn2Block(cfg, rng) for _ in range(spec.depths[i])]
            stages.append(Stage(embed, blocks, spec.dims[i]))
            prev = spec.dims[i]
        self.stages = stages
        self.head = Linear(spec.dims[3], num_classes, rng)

    def forward_features(self, x: Tensor, captures: Optional[list] = None) -> List[Tensor]:
        feats = []
        for stage in self.stages:
            x = stage(x, captures=captures)
            feats.append(x)
        return feats

    def forward(self, x: Tensor) -> Tensor:
        feats = self.forward_features(x)
        pooled = T.global_average_pool(feats[-1])
        return self.head(pooled)

    __call__ = forward


def build_backbone(
    variant: str,
    mode: str = "classify",
    num_classes: int = 1000,
    input_size: int = 224,
    seed: int = 0,
) -> Backbone:
    spec = backbone_spec(variant, mode)
    rng = SplitMix(seed).spawn(7)
    model = Backbone(spec, num_classes, input_size, rng)
    model.set_training(False)
    return model


def forward_features(model: Backbone, x: Tensor) -> List[Tensor]:
    return model.forward_features(x)


_CONFIG_KEYS = {"variant", "mode", "num_classes", "input_size"}


def model_config_to_json(model: Backbone) -> str:
    return json.dumps(
        {
            "variant": model.spec.variant,
            "mode": model.spec.mode,
            "num_classes": model.num_classes,
            "input_size": model.input_size,
        },
        indent=2,
    )


def model_from_config(doc: dict, seed: int = 0) -> Backbone:
    if not isinstance(doc, dict):
        raise ConfigError("model config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    missing = {"variant", "mode"} - set(doc)
    if missing:
        raise ConfigError(f"model config missing keys: {sorted(missing)}")
    return build_backbone(
        doc["variant"],
        doc["mode"],
        num_classes=int(doc.get("num_classes", 1000)),
        input_size=int(doc.get("input_size", 224)),
        seed=seed,
    )
