"""Brute-force reference implementations.

Everything here is written as plain loops over numpy scalars, shares no code
with the production kernels, and exists so that any bug in the vectorized or
compiled paths shows up as a disagreement. Spatial extents are capped at
16x16 to bound runtime; callers wanting larger maps are using the wrong tool.

Each function accepts an optional ``MacCounter`` and increments it once per
multiply-accumulate, including multiplications against padded zeros, so the
counts match the analytic ledger formulas exactly.
"""

from __future__ import annotations

import math

import numpy as np

_MAX_SPATIAL = 16


class MacCounter(object):
    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


def _check_spatial(h: int, w: int):
    if h > _MAX_SPATIAL or w > _MAX_SPATIAL:
        raise ValueError(f"oracle restricted to spatial <= {_MAX_SPATIAL}, got {h}x{w}")


def conv2d_reference(x, w, b=None, stride=1, padding=1, dilation=1, groups=1, counter=None):
    """Direct septuple-loop cross-correlation with zero padding."""
    n, cin, h, ww = x.shape
    cout, cg, kh, kw = w.shape
    _check_spatial(h, ww)
    ho = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (ww + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    cpg = cout // groups
    y = np.zeros((n, cout, ho, wo))
    for bi in range(n):
        for co in range(cout):
            g = co // cpg
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ci in range(cg):
                        for ky in range(kh):
                            for kx in range(kw):
                                iy = oy * stride - padding + ky * dilation
                                ix = ox * stride - padding + kx * dilation
                                if 0 <= iy < h and 0 <= ix < ww:
                                    val = x[bi, g * cg + ci, iy, ix]
                                else:
                                    val = 0.0
                                acc += val * w[co, ci, ky, kx]
                                if counter is not None:
                                    counter.add(1)
                    if b is not None:
                        acc += b[co]
                    y[bi, co, oy, ox] = acc
    return y


def matmul_reference(a, b, counter=None):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
                if counter is not None:
                    counter.add(1)
            out[i, j] = acc
    return out


def softmax_reference(x, axis=-1):
    """exp over sum along one axis, max-shifted."""
    x = np.asarray(x, dtype=np.float64)
    mx = x.max(axis=axis, keepdims=True)
    e = np.exp(x - mx)
    return e / e.sum(axis=axis, keepdims=True)


def bilinear_point(fmap_nchw, bi, cy, cx, counter=None):
    """One 4-corner read of all channels at a float coordinate: [C]."""
    _, c, h, w = fmap_nchw.shape
    y0 = math.floor(cy)
    x0 = math.floor(cx)
    fy = cy - y0
    fx = cx - x0
    out = np.zeros(c)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy = y0 + dy
            xx = x0 + dx
            inside = 0 <= yy < h and 0 <= xx < w
            for ch in range(c):
                val = fmap_nchw[bi, ch, yy, xx] if inside else 0.0
                out[ch] += (wy * wx) * val
                if counter is not None:
                    counter.add(1)
    return out


def bilinear_reference(fmap, coords, counter=None):
    """4-corner interpolation at [N, P, 2] coordinates: [N, P, C]."""
    n, c, h, w = fmap.shape
    _check_spatial(h, w)
    p = coords.shape[1]
    out = np.zeros((n, p, c))
    for bi in range(n):
        for i in range(p):
            out[bi, i] = bilinear_point(fmap, bi, coords[bi, i, 0], coords[bi, i, 1], counter)
    return out


def dmc_reference(feat, coords, weights, affinities, groups, counter=None):
    """Grouped dynamic message calculation, one node at a time.

    feat: [N, C, H, W]; coords: [N, H, W, K, 2] float; weights: [N, H, W, K, G];
    affinities: [N, H, W, K]. Output [N, C, H, W] where node j contributes
    affinity * sampled_value * group_scalar per channel.
    """
    n, c, h, w = feat.shape
    _check_spatial(h, w)
    k = coords.shape[3]
    cg = c // groups
    out = np.zeros((n, c, h, w))
    for bi in range(n):
        for y in range(h):
            for x in range(w):
                for j in range(k):
                    sampled = bilinear_point(feat, bi, coords[bi, y, x, j, 0], coords[bi, y, x, j, 1], counter)
                    for ch in range(c):
                        g = ch // cg
                        out[bi, ch, y, x] += affinities[bi, y, x, j] * sampled[ch] * weights[bi, y, x, j, g]
                        if counter is not None:
                            counter.add(2)
    return out


def dense_attention(q, k, v, scale=None, counter=None):
    """Full P x P softmax attention over one head: q, k, v are [P, D]."""
    p, d = q.shape
    scale = (1.0 / math.sqrt(d)) if scale is None else scale
    out = np.zeros((p, d))
    for i in range(p):
        logits = np.zeros(p)
        for j in range(p):
            acc = 0.0
            for t in range(d):
                acc += q[i, t] * k[j, t]
                if counter is not None:
                    counter.add(1)
            logits[j] = acc * scale
            if counter is not None:
                counter.add(1)
        attn = softmax_reference(logits)
        for j in range(p):
            for t in range(d):
                out[i, t] += attn[j] * v[j, t]
                if counter is not None:
                    counter.add(1)
    return out


def uniform_grid_reference(h, w, rate, k):
    """Query-centered dilated grid coordinates, [H, W, K, 2]."""
    side = int(round(math.sqrt(k)))
    half = side // 2
    out = np.zeros((h, w, k, 2), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            j = 0
            for a in range(-half, half + 1):
                for b_ in range(-half, half + 1):
                    out[y, x, j, 0] = y + a * rate
                    out[y, x, j, 1] = x + b_ * rate
                    j += 1
    return out


def relpos_reference(table_y, table_x, dy, dx, counter=None):
    """Additive height/width bias via clamped 1-D linear interpolation.

    table_y/table_x are [R] for one head; dy/dx are float offsets.
    """

    def interp(tab, off):
        r = tab.shape[0]
        pos = off + (r - 1) / 2.0
        pos = min(max(pos, 0.0), r - 1.0)
        lo = min(int(math.floor(pos)), r - 2)
        f = pos - lo
        if counter is not None:
            counter.add(2)
        return tab[lo] * (1.0 - f) + tab[lo + 1] * f

    return interp(table_y, dy) + interp(table_x, dx)


def sampled_attention_reference(
    feat,
    coords,
    wq,
    bq,
    wk,
    bk,
    wv,
    bv,
    wo,
    bo,
    tables_y,
    tables_x,
    heads,
    counter=None,
):
    """Per-position sampled key/value attention, one rate branch.

    feat: [N, d, H, W]; coords: [N, H, W, K, 2] float. Projections are
    1x1-conv parameters given as [d_out, d_in] weights plus biases. Relative
    position tables are [heads, R] each. Returns the message map [N, d, H, W].
    """
    n, d, h, w = feat.shape
    _check_spatial(h, w)
    k = coords.shape[3]
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)

    def project(weight, bias):
        out = np.zeros((n, weight.shape[0], h, w))
        for bi in range(n):
            for y in range(h):
                for x in range(w):
                    for co in range(weight.shape[0]):
                        acc = 0.0
                        for ci in range(d):
                            acc += weight[co, ci] * feat[bi, ci, y, x]
                            if counter is not None:
                                counter.add(1)
                        out[bi, co, y, x] = acc + bias[co]
        return out

    qmap = project(wq, bq)
    kmap = project(wk, bk)
    vmap = project(wv, bv)

    msg = np.zeros((n, d, h, w))
    for bi in range(n):
        for y in range(h):
            for x in range(w):
                ks = np.zeros((k, d))
                vs = np.zeros((k, d))
                for j in range(k):
                    ks[j] = bilinear_point(kmap, bi, coords[bi, y, x, j, 0], coords[bi, y, x, j, 1], counter)
                    vs[j] = bilinear_point(vmap, bi, coords[bi, y, x, j, 0], coords[bi, y, x, j, 1], counter)
                for hd in range(heads):
                    sl = slice(hd * dh, (hd + 1) * dh)
                    logits = np.zeros(k)
                    for j in range(k):
                        acc = 0.0
                        for t in range(dh):
                            acc += qmap[bi, sl, y, x][t] * ks[j, sl][t]
                            if counter is not None:
                                counter.add(1)
                        acc *= scale
                        if counter is not None:
                            counter.add(1)
                        dy = coords[bi, y, x, j, 0] - y
                        dx = coords[bi, y, x, j, 1] - x
                        logits[j] = acc + relpos_reference(tables_y[hd], tables_x[hd], dy, dx, counter)
                    attn = softmax_reference(logits)
                    for j in range(k):
                        for t in range(dh):
                            msg[bi, hd * dh + t, y, x] += attn[j] * vs[j, sl][t]
                            if counter is not None:
                                counter.add(1)

    out = np.zeros((n, d, h, w))
    for bi in range(n):
        for y in range(h):
            for x in range(w):
                for co in range(d):
                    acc = 0.0
                    for ci in range(d):
                        acc += wo[co, ci] * msg[bi, ci, y, x]
                        if counter is not None:
                            counter.add(1)
                    out[bi, co, y, x] = acc + bo[co]
    return out
