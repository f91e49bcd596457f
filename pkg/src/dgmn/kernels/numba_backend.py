"""Numba-compiled loop kernels. Hot path when DGMN_BACKEND is numba/auto."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_forward(x, w, stride, padding, dilation, groups):
    n, cin, h, ww = x.shape
    cout, cg, kh, kw = w.shape
    ho = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (ww + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    cpg = cout // groups
    y = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for co in range(cout):
            c0 = (co // cpg) * cg
            for oy in range(ho):
                iy0 = oy * stride - padding
                for ox in range(wo):
                    ix0 = ox * stride - padding
                    acc = 0.0
                    for ci in range(cg):
                        for ky in range(kh):
                            iy = iy0 + ky * dilation
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ix0 + kx * dilation
                                if 0 <= ix < ww:
                                    acc += x[b, c0 + ci, iy, ix] * w[co, ci, ky, kx]
                    y[b, co, oy, ox] = acc
    return y


@njit(cache=True)
def conv2d_backward_input(gy, w, x_shape, stride, padding, dilation, groups):
    n, cin, h, ww = x_shape
    cout, cg, kh, kw = w.shape
    ho = gy.shape[2]
    wo = gy.shape[3]
    cpg = cout // groups
    gx = np.zeros((n, cin, h, ww))
    for b in range(n):
        for co in range(cout):
            c0 = (co // cpg) * cg
            for oy in range(ho):
                iy0 = oy * stride - padding
                for ox in range(wo):
                    ix0 = ox * stride - padding
                    g = gy[b, co, oy, ox]
                    for ci in range(cg):
                        for ky in range(kh):
                            iy = iy0 + ky * dilation
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ix0 + kx * dilation
                                if 0 <= ix < ww:
                                    gx[b, c0 + ci, iy, ix] += g * w[co, ci, ky, kx]
    return gx


@njit(cache=True)
def conv2d_backward_weight(gy, x, w_shape, stride, padding, dilation, groups):
    cout, cg, kh, kw = w_shape
    n, cin, h, ww = x.shape
    ho = gy.shape[2]
    wo = gy.shape[3]
    cpg = cout // groups
    gw = np.zeros((cout, cg, kh, kw))
    for b in range(n):
        for co in range(cout):
            c0 = (co // cpg) * cg
            for oy in range(ho):
                iy0 = oy * stride - padding
                for ox in range(wo):
                    ix0 = ox * stride - padding
                    g = gy[b, co, oy, ox]
                    for ci in range(cg):
                        for ky in range(kh):
                            iy = iy0 + ky * dilation
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ix0 + kx * dilation
                                if 0 <= ix < ww:
                                    gw[co, ci, ky, kx] += g * x[b, c0 + ci, iy, ix]
    return gw


@njit(cache=True)
def bilinear_forward(fmap, coords):
    n, c, h, w = fmap.shape
    p = coords.shape[1]
    out = np.zeros((n, p, c))
    for b in range(n):
        for i in range(p):
            cy = coords[b, i, 0]
            cx = coords[b, i, 1]
            y0 = int(math.floor(cy))
            x0 = int(math.floor(cx))
            fy = cy - y0
            fx = cx - x0
            for dy in range(2):
                yy = y0 + dy
                if yy < 0 or yy >= h:
                    continue
                wy = fy if dy == 1 else 1.0 - fy
                for dx in range(2):
                    xx = x0 + dx
                    if xx < 0 or xx >= w:
                        continue
                    wgt = wy * (fx if dx == 1 else 1.0 - fx)
                    for ch in range(c):
                        out[b, i, ch] += wgt * fmap[b, ch, yy, xx]
    return out


@njit(cache=True)
def bilinear_backward(fmap, coords, gout):
    n, c, h, w = fmap.shape
    p = coords.shape[1]
    gmap = np.zeros((n, c, h, w))
    gcoords = np.zeros((n, p, 2))
    for b in range(n):
        for i in range(p):
            cy = coords[b, i, 0]
            cx = coords[b, i, 1]
            y0 = int(math.floor(cy))
            x0 = int(math.floor(cx))
            fy = cy - y0
            fx = cx - x0
            for dy in range(2):
                yy = y0 + dy
                if yy < 0 or yy >= h:
                    continue
                wy = fy if dy == 1 else 1.0 - fy
                sy = 1.0 if dy == 1 else -1.0
                for dx in range(2):
                    xx = x0 + dx
                    if xx < 0 or xx >= w:
                        continue
                    wx = fx if dx == 1 else 1.0 - fx
                    sx = 1.0 if dx == 1 else -1.0
                    wgt = wy * wx
                    gy_acc = 0.0
                    for ch in range(c):
                        g = gout[b, i, ch]
                        gmap[b, ch, yy, xx] += wgt * g
                        gy_acc += g * fmap[b, ch, yy, xx]
                    gcoords[b, i, 0] += sy * wx * gy_acc
                    gcoords[b, i, 1] += sx * wy * gy_acc
    return gmap, gcoords
