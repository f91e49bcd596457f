"""Analytic parameter/MAC accounting and sampled-node export.

MAC convention: one multiply-accumulate is one unit. Convolution counts
every kernel tap including taps over the zero padding, bilinear sampling
counts four taps per channel per node, relative-position lookup counts two
taps per axis, and logit scaling counts one. Softmax, normalization layers
and activations are not counted. The instrumented counters inside the
oracle loops follow the same convention, so analytic and counted totals
must agree exactly, not approximately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .backbone import Backbone, ConvBnRelu, PatchEmbedDown, PatchEmbedStem
from .dgmn2 import Dgmn2Attention, Dgmn2Block, Dgmn2Config
from .errors import ConfigError
from .nn import Module
from .tensor import Tensor


@dataclass
class LedgerEntry:
    name: str
    params: int
    macs: int


@dataclass
class OpLedger:
    entries: List[LedgerEntry] = field(default_factory=list)

    def add(self, name: str, params: int, macs: int):
        self.entries.append(LedgerEntry(name, int(params), int(macs)))

    @property
    def total_params(self) -> int:
        return sum(e.params for e in self.entries)

    @property
    def total_macs(self) -> int:
        return sum(e.macs for e in self.entries)

    def to_json(self) -> str:
        return json.dumps(
            {
                "entries": [e.__dict__ for e in self.entries],
                "total_params": self.total_params,
                "total_macs": self.total_macs,
            },
            indent=2,
        )

    def to_text(self) -> str:
        width = max([len(e.name) for e in self.entries] + [5])
        lines = [f"{'layer':<{width}}  {'params':>12}  {'macs':>16}"]
        for e in self.entries:
            lines.append(f"{e.name:<{width}}  {e.params:>12}  {e.macs:>16}")
        lines.append(f"{'total':<{width}}  {self.total_params:>12}  {self.total_macs:>16}")
        return "\n".join(lines)


def count_params(module: Module) -> int:
    return sum(p.size for p in module.parameters())


def mac_conv2d(cin: int, cout: int, h_out: int, w_out: int, kernel: int, groups: int = 1) -> int:
    return h_out * w_out * cout * (cin // groups) * kernel * kernel


def mac_matmul(m: int, k: int, n: int) -> int:
    return m * k * n


def attention_ledger(cfg: Dgmn2Config, h: int, w: int, prefix: str = "attention") -> OpLedger:
    """Itemized MACs of one sampled-attention op at batch 1 on an h x w map.

    Every term is proportional to h*w for fixed K, d: the op is linear in
    the number of positions.
    """
    d, heads, k = cfg.dim, cfg.heads, cfg.k
    hw = h * w
    led = OpLedger()
    r = 2 * cfg.pos_grid - 1
    for rate in cfg.rates:
        tag = f"{prefix}.rate{rate}" if len(cfg.rates) > 1 else prefix
        led.add(f"{tag}.walk-prediction", d * 9 * 2 * k + 2 * k, mac_conv2d(d, 2 * k, h, w, 3))
        led.add(f"{tag}.sampling", 0, 8 * hw * k * d)
        led.add(f"{tag}.query-key", 0, hw * k * (d + heads))
        led.add(f"{tag}.relpos", 2 * r * heads, 4 * hw * k * heads)
        led.add(f"{tag}.attn-value", 0, hw * k * d)
    for name in ("query", "key", "value", "out"):
        led.add(f"{prefix}.proj-{name}", d * d + d, mac_conv2d(d, d, h, w, 1))
    return led


def mac_sampled_attention(cfg: Dgmn2Config, h: int, w: int) -> int:
    return attention_ledger(cfg, h, w).total_macs


def mac_dense_attention(p: int, d: int, heads: int = 1) -> int:
    """Dense softmax attention core over p positions: query-key, scale and
    attn-value only, each quadratic in p. Projections are excluded so every
    term shares the p**2 factor."""
    return p * p * (2 * d + heads)


def _block_ledger(block: Dgmn2Block, h: int, w: int, prefix: str) -> OpLedger:
    led = OpLedger()
    cfg = block.cfg
    d = cfg.dim
    for e in attention_ledger(cfg, h, w, prefix=f"{prefix}.attn").entries:
        led.entries.append(e)
    led.add(f"{prefix}.norms", 4 * d, 0)
    led.add(f"{prefix}.alpha", d, h * w * d)
    hidden = cfg.ffn_ratio * d
    led.add(f"{prefix}.ffn-in", d * hidden + hidden, mac_conv2d(d, hidden, h, w, 1))
    led.add(f"{prefix}.ffn-out", hidden * d + d, mac_conv2d(hidden, d, h, w, 1))
    return led


def _conv_bn_entry(unit: ConvBnRelu, h_in: int, w_in: int, name: str) -> Tuple[LedgerEntry, int, int]:
    cout, cg, kh, _ = unit.conv.weight.shape
    cin = cg * unit.conv.groups
    s = unit.conv.stride
    h_out = (h_in + 2 * unit.conv.padding - (kh - 1) - 1) // s + 1
    w_out = (w_in + 2 * unit.conv.padding - (kh - 1) - 1) // s + 1
    params = unit.conv.weight.size + unit.conv.bias.size + unit.bn.gamma.size + unit.bn.beta.size
    entry = LedgerEntry(name, params, mac_conv2d(cin, cout, h_out, w_out, kh, unit.conv.groups))
    return entry, h_out, w_out


def build_ledger(model: Backbone, h: int, w: int) -> OpLedger:
    """Whole-model ledger at batch 1 for an h x w input image."""
    led = OpLedger()
    cur_h, cur_w = h, w
    for si, stage in enumerate(model.stages):
        sname = f"stage{si + 1}"
        if isinstance(stage.embed, PatchEmbedStem):
            for ui, unit in enumerate(stage.embed.units):
                entry, cur_h, cur_w = _conv_bn_entry(unit, cur_h, cur_w, f"{sname}.embed.{ui}")
                led.entries.append(entry)
        elif isinstance(stage.embed, PatchEmbedDown):
            entry, cur_h, cur_w = _conv_bn_entry(stage.embed.unit, cur_h, cur_w, f"{sname}.embed")
            led.entries.append(entry)
        for bi, block in enumerate(stage.blocks):
            for e in _block_ledger(block, cur_h, cur_w, f"{sname}.block{bi}").entries:
                led.entries.append(e)
        led.add(f"{sname}.norm", stage.norm.gamma.size + stage.norm.beta.size, 0)
    led.add("head", model.head.weight.size + model.head.bias.size, mac_matmul(1, model.head.weight.shape[0], model.head.weight.shape[1]))
    return led


def count_flops(model: Backbone, h: int, w: int) -> int:
    return build_ledger(model, h, w).total_macs


# ------------------------------------------------------------------- export


def export_sampled_nodes(
    model: Backbone,
    image: np.ndarray,
    positions: Sequence[Tuple[int, int]],
    out_json: Optional[str] = None,
    out_svg: Optional[str] = None,
) -> dict:
    """Resolved sample coordinates and attention mass per query position.

    Positions are (y, x) in input-image pixels; each is mapped to the query
    cell of the last block of every stage. Weights are attention mass summed
    over heads and averaged over rates for that query. The SVG is a static
    plot: the query as a square, samples as circles shaded by weight.
    """
    n, _, h, w = image.shape
    for y, x in positions:
        if not (0 <= y < h and 0 <= x < w):
            raise ConfigError(f"position ({y}, {x}) outside input extent {h}x{w}")
    model.set_training(False)
    captures: list = []
    model.forward_features(Tensor(image), captures=captures)
    records = []
    for si, cap in enumerate(captures):
        field_ = cap["field"]
        hs, ws = field_.height, field_.width
        stride = h // hs
        for (py, px) in positions:
            qy, qx = min(py // stride, hs - 1), min(px // stride, ws - 1)
            p = qy * ws + qx
            for ri, rate in enumerate(field_.rates):
                res = field_.resolved_numpy(ri)[0]
                attn = cap["attention"][ri]  # [N, heads, HW, K]
                mass = attn[0, :, p, :].sum(axis=0)
                mass = mass / mass.sum()
                for j in range(field_.k):
                    records.append(
                        {
                            "stage": si + 1,
                            "y": int(qy),
                            "x": int(qx),
                            "rate": int(rate),
                            "node_index": int(j),
                            "sampled_y": float(res[qy, qx, j, 0]),
                            "sampled_x": float(res[qy, qx, j, 1]),
                            "weight": float(mass[j]),
                        }
                    )
    doc = {"input_hw": [h, w], "positions": [[int(y), int(x)] for y, x in positions], "records": records}
    if out_json:
        with open(out_json, "w") as fh:
            json.dump(doc, fh, indent=2)
    if out_svg:
        with open(out_svg, "w") as fh:
            fh.write(render_node_svg(doc, captures))
    return doc


def render_node_svg(doc: dict, captures: list) -> str:
    """One panel per (stage, query): static SVG, no interaction."""
    cell = 14.0
    pad = 30.0
    panels = []
    by_panel: dict = {}
    for rec in doc["records"]:
        by_panel.setdefault((rec["stage"], rec["y"], rec["x"]), []).append(rec)
    grids = {si + 1: (cap["field"].height, cap["field"].width) for si, cap in enumerate(captures)}
    x_off = pad
    max_h = 0.0
    for (stage, qy, qx), recs in sorted(by_panel.items()):
        hs, ws = grids[stage]
        pw, ph = ws * cell, hs * cell
        max_h = max(max_h, ph)
        parts = [
            f'<g transform="translate({x_off:.1f},{pad:.1f})">',
            f'<rect x="0" y="0" width="{pw:.1f}" height="{ph:.1f}" fill="none" stroke="#888"/>',
            f'<text x="0" y="-8" font-size="10" fill="#333">stage {stage} query ({qy},{qx})</text>',
        ]
        wmax = max(r["weight"] for r in recs) or 1.0
        for r in recs:
            cx = (r["sampled_x"] + 0.5) * cell
            cy = (r["sampled_y"] + 0.5) * cell
            op = 0.15 + 0.85 * r["weight"] / wmax
            parts.append(
                f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{cell * 0.28:.1f}" fill="#e07020" fill-opacity="{op:.3f}"/>'
            )
        parts.append(
            f'<rect x="{(qx + 0.2) * cell:.1f}" y="{(qy + 0.2) * cell:.1f}" '
            f'width="{cell * 0.6:.1f}" height="{cell * 0.6:.1f}" fill="#2060c0"/>'
        )
        parts.append("</g>")
        panels.append("\n".join(parts))
        x_off += pw + pad
    width = x_off
    height = max_h + 2 * pad
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" height="{height:.0f}">\n'
        + "\n".join(panels)
        + "\n</svg>\n"
    )
