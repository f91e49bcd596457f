"""Desk-scale synthetic tasks and the optimization loop that overfits them.

The classification task places two identical Gaussian blobs; the label says
which pair of relative quadrants the partner occupies (diagonal versus
anti-diagonal). The blobs are interchangeable and their per-axis position
marginals are identical across classes by construction, so absolute
position reveals nothing; the blob separation exceeds what a small stem
plus two rate-1 attention hops can bridge, so solving the task requires a
higher sampling rate or learned walks: exactly the capability the
long-range layers claim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import tensor as T
from .dgmn2 import Dgmn2Block, Dgmn2Config, channel_layer_norm
from .errors import ConfigError, TrainingError
from .nn import BatchNorm2d, Conv2d, LayerNorm, Linear, Module
from .optim import AdamW, cosine_lr
from .rng import SplitMix
from .tensor import Tensor

# Frozen regression budgets, set from the worst of seeds {0, 1, 2} with
# margin after the first calibration runs. Tests treat these as constants.
CLASSIFY_STEP_BUDGET = 400
SEPARATION_STEP_BUDGET = 400
SEPARATION_HIGH_RATE = 4
SEPARATION_LOW_RATE = 1
TOY_LR = 3e-3

# Geometry of classify_blobs: no feature of the rate-1 ablation may see both
# blob cores at once. The stem is a single stride-4 conv (+-1 px), each
# rate-1 hop adds +-4 px, so a two-block tail spans +-9 px; blob supports
# are ~+-4 px, which forces the per-axis separation above 14 px. The low
# and high coordinates keep both blobs at least 6 px from every border.
_BLOB_SIGMA = 1.3
_OFFSET_MIN = 15
_OFFSET_MAX = 17
_LOW_MIN = 6
_LOW_MAX = 8


@dataclass
class SyntheticTask:
    kind: str = "classify_blobs"
    count: int = 16
    size: int = 32
    classes: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("classify_blobs", "segment_stripes"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.size < 16:
            raise ConfigError(f"task size must be >= 16, got {self.size}")
        if self.kind == "classify_blobs" and self.classes != 2:
            raise ConfigError("classify_blobs is binary: diagonal vs anti-diagonal partner")


def _blob(size: int, cy: float, cx: float, sigma: float) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))


def _classify_blobs(task: SyntheticTask) -> Tuple[np.ndarray, np.ndarray]:
    rng = SplitMix(task.seed).spawn(11)
    s = task.size
    scale = s / 32.0  # geometry constants are stated for the 32 px reference
    lo_min, lo_max = int(_LOW_MIN * scale), int(_LOW_MAX * scale)
    off_min, off_max = int(_OFFSET_MIN * scale), int(_OFFSET_MAX * scale)
    images = np.zeros((task.count, 1, s, s))
    labels = np.zeros(task.count, dtype=np.int64)
    for i in range(task.count):
        label = i % 2  # stratified: exact class balance
        ly = rng.integers(lo_min, lo_max + 1)
        lx = rng.integers(lo_min, lo_max + 1)
        hy = ly + rng.integers(off_min, off_max + 1)
        hx = lx + rng.integers(off_min, off_max + 1)
        if label == 0:  # partner on the diagonal
            pair = ((ly, lx), (hy, hx))
        else:  # partner on the anti-diagonal
            pair = ((ly, hx), (hy, lx))
        for (cy, cx) in pair:
            images[i, 0] += _blob(s, cy, cx, _BLOB_SIGMA)
        labels[i] = label
    return images, labels


def _segment_stripes(task: SyntheticTask) -> Tuple[np.ndarray, np.ndarray]:
    rng = SplitMix(task.seed).spawn(13)
    s = task.size
    period = 8.0
    images = np.zeros((task.count, 1, s, s))
    labels = np.zeros((task.count, s, s), dtype=np.int64)
    yy, xx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    for i in range(task.count):
        theta = float(rng.uniform()) * math.pi
        phase = float(rng.uniform()) * period
        proj = yy * math.sin(theta) + xx * math.cos(theta) + phase
        band = np.floor(proj / period).astype(np.int64)
        labels[i] = np.mod(band, task.classes)
        images[i, 0] = np.sin(2.0 * math.pi * proj / (period * task.classes))
        images[i, 0] += 0.05 * rng.normal((s, s))
    return images, labels


def make_dataset(task: SyntheticTask) -> Tuple[np.ndarray, np.ndarray]:
    """Images and labels as numpy arrays; a pure function of the task."""
    if task.kind == "classify_blobs":
        return _classify_blobs(task)
    return _segment_stripes(task)


class ToyClassifier(Module):
    """One stride-4 conv to an 8x8 grid, two attention blocks, pooled head.

    The stem is deliberately a single 3x3 conv so its receptive field stays
    at +-1 px and cross-blob evidence can only flow through the attention
    layers; see the geometry notes above.
    """

    def __init__(self, rate: int, rng: SplitMix, in_ch: int = 1, dim: int = 32, classes: int = 2):
        self.conv1 = Conv2d(in_ch, dim, 3, rng, stride=4, padding=1)
        self.bn1 = BatchNorm2d(dim)
        cfg = Dgmn2Config(dim=dim, heads=2, ffn_ratio=2, rates=[rate], pos_grid=8)
        self.blocks = [Dgmn2Block(cfg, rng) for _ in range(2)]
        self.norm = LayerNorm(dim)
        self.head = Linear(dim, classes, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = T.relu(self.bn1(self.conv1(x)))
        for block in self.blocks:
            x = block(x)
        x = channel_layer_norm(x, self.norm)
        return self.head(T.global_average_pool(x))

    __call__ = forward

    def mean_walk_magnitude(self, x: Tensor) -> float:
        """Average |dy| + |dx| over all walk predictors; zero at init."""
        total, count = 0.0, 0
        for block in self.blocks:
            feat = channel_layer_norm(x, block.ln1)
            for conv in block.attn.walks.convs:
                walk = conv(feat).data
                total += np.abs(walk).sum()
                count += walk.size
        return total / count


class ToySegmenter(Module):
    """Stride-2 stem, one attention block, per-pixel linear classifier."""

    def __init__(self, rate: int, rng: SplitMix, classes: int = 2, dim: int = 16):
        self.conv1 = Conv2d(1, dim, 3, rng, stride=2, padding=1)
        self.bn1 = BatchNorm2d(dim)
        self.block = Dgmn2Block(Dgmn2Config(dim=dim, heads=2, ffn_ratio=2, rates=[rate], pos_grid=16), rng)
        self.out = Conv2d(dim, classes, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = T.relu(self.bn1(self.conv1(x)))
        x = self.block(x)
        return self.out(x)

    __call__ = forward


def build_toy_model(task: SyntheticTask, rate: int, seed: int) -> Module:
    rng = SplitMix(seed).spawn(17)
    if task.kind == "classify_blobs":
        return ToyClassifier(rate, rng, classes=task.classes)
    return ToySegmenter(rate, rng, classes=task.classes)


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    if logits.ndim == 2:
        return float((logits.argmax(axis=1) == labels).mean())
    return float((logits.argmax(axis=1) == labels).mean())


def train(
    model: Module,
    task: SyntheticTask,
    steps: int,
    lr: float = TOY_LR,
    seed: int = 0,
    schedule: str = "constant",
    stop_at_accuracy: Optional[float] = None,
) -> List[Tuple[int, float, float]]:
    """Full-batch overfit loop; returns (step, loss, accuracy) per step.

    Deterministic given the seed. Raises TrainingError at the first step
    whose loss is not finite.
    """
    del seed  # datasets and init carry their own seeds; kept for the CLI surface
    images, labels = make_dataset(task)
    x = Tensor(images)
    if task.kind == "segment_stripes":
        target = labels[:, ::2, ::2]  # model predicts at stride 2
    else:
        target = labels
    model.set_training(True)
    opt = AdamW(model.parameters(), lr=lr)
    history: List[Tuple[int, float, float]] = []
    for step in range(steps):
        model.zero_grad()
        logits = model(x)
        loss = T.cross_entropy_loss(logits, target)
        loss_val = loss.item()
        if not math.isfinite(loss_val):
            raise TrainingError(f"loss diverged at step {step}", step)
        acc = _accuracy(logits.data, target)
        history.append((step, loss_val, acc))
        loss.backward()
        opt.step(lr=cosine_lr(lr, step, steps) if schedule == "cosine" else lr)
        if stop_at_accuracy is not None and acc >= stop_at_accuracy:
            break
    model.set_training(False)
    return history


def metrics_csv(history: List[Tuple[int, float, float]]) -> str:
    lines = ["step,loss,accuracy"]
    for step, loss, acc in history:
        lines.append(f"{step},{loss!r},{acc!r}")
    return "\n".join(lines) + "\n"
