"""Vectorized numpy implementations of the hot kernels.

This is the fallback path used when numba is unavailable or disabled via
DGMN_BACKEND=numpy. Semantics match the numba backend exactly: zero padding
for convolution, zero reads outside bounds for bilinear sampling. Summation
order may differ from the loop backend in the last few ulps.
"""

from __future__ import annotations

import numpy as np


def _conv_out_size(extent, k, stride, padding, dilation):
    return (extent + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _patch_view(xp, kh, kw, stride, dilation, ho, wo):
    # Gather [N, C, Ho, Wo, kh, kw] patches from the padded input.
    iy = np.arange(ho)[:, None] * stride + np.arange(kh)[None, :] * dilation
    ix = np.arange(wo)[:, None] * stride + np.arange(kw)[None, :] * dilation
    return xp[:, :, iy[:, None, :, None], ix[None, :, None, :]]


def pointwise_forward(x, w, stride, groups):
    """1x1 convolution without padding: a strided slice plus a matmul."""
    n, cin, h, ww = x.shape
    cout = w.shape[0]
    xs = x[:, :, ::stride, ::stride]
    xg = xs.reshape(n, groups, cin // groups, xs.shape[2], xs.shape[3])
    wg = w.reshape(groups, cout // groups, cin // groups)
    y = np.einsum("ngchw,goc->ngohw", xg, wg, optimize=True)
    return np.ascontiguousarray(y.reshape(n, cout, xs.shape[2], xs.shape[3]))


def pointwise_backward_input(gy, w, x_shape, stride, groups):
    n, cin, h, ww = x_shape
    cout = w.shape[0]
    gyg = gy.reshape(n, groups, cout // groups, gy.shape[2], gy.shape[3])
    wg = w.reshape(groups, cout // groups, cin // groups)
    gxs = np.einsum("ngohw,goc->ngchw", gyg, wg, optimize=True).reshape(
        n, cin, gy.shape[2], gy.shape[3]
    )
    if stride == 1:
        return np.ascontiguousarray(gxs)
    gx = np.zeros(x_shape)
    gx[:, :, ::stride, ::stride] = gxs
    return gx


def pointwise_backward_weight(gy, x, w_shape, stride, groups):
    cout, cg, _, _ = w_shape
    n, cin, _, _ = x.shape
    xs = x[:, :, ::stride, ::stride]
    xg = xs.reshape(n, groups, cg, xs.shape[2], xs.shape[3])
    gyg = gy.reshape(n, groups, cout // groups, gy.shape[2], gy.shape[3])
    gw = np.einsum("ngohw,ngchw->goc", gyg, xg, optimize=True)
    return np.ascontiguousarray(gw.reshape(w_shape))


def conv2d_forward(x, w, stride, padding, dilation, groups):
    n, cin, h, ww = x.shape
    cout, cg, kh, kw = w.shape
    ho = _conv_out_size(h, kh, stride, padding, dilation)
    wo = _conv_out_size(ww, kw, stride, padding, dilation)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    patches = _patch_view(xp, kh, kw, stride, dilation, ho, wo)
    patches = patches.reshape(n, groups, cg, ho, wo, kh * kw)
    wg = w.reshape(groups, cout // groups, cg, kh * kw)
    y = np.einsum("ngchwk,gock->ngohw", patches, wg, optimize=True)
    return np.ascontiguousarray(y.reshape(n, cout, ho, wo))


def conv2d_backward_input(gy, w, x_shape, stride, padding, dilation, groups):
    n, cin, h, ww = x_shape
    cout, cg, kh, kw = w.shape
    _, _, ho, wo = gy.shape
    gyg = gy.reshape(n, groups, cout // groups, ho, wo)
    wg = w.reshape(groups, cout // groups, cg, kh, kw)
    # Per-tap gradient columns, scattered back onto the padded input.
    gcol = np.einsum("ngohw,gocyx->ngchwyx", gyg, wg, optimize=True)
    gcol = gcol.reshape(n, cin, ho, wo, kh, kw)
    gxp = np.zeros((n, cin, h + 2 * padding, ww + 2 * padding))
    for ky in range(kh):
        ys = ky * dilation
        for kx in range(kw):
            xs = kx * dilation
            gxp[:, :, ys : ys + ho * stride : stride, xs : xs + wo * stride : stride] += gcol[
                :, :, :, :, ky, kx
            ]
    if padding:
        return gxp[:, :, padding:-padding, padding:-padding].copy()
    return gxp


def conv2d_backward_weight(gy, x, w_shape, stride, padding, dilation, groups):
    cout, cg, kh, kw = w_shape
    n, cin, h, ww = x.shape
    _, _, ho, wo = gy.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    patches = _patch_view(xp, kh, kw, stride, dilation, ho, wo)
    patches = patches.reshape(n, groups, cg, ho, wo, kh, kw)
    gyg = gy.reshape(n, groups, cout // groups, ho, wo)
    gw = np.einsum("ngohw,ngchwyx->gocyx", gyg, patches, optimize=True)
    return np.ascontiguousarray(gw.reshape(cout, cg, kh, kw))


def _corner_terms(coords, h, w):
    cy = coords[..., 0]
    cx = coords[..., 1]
    y0 = np.floor(cy)
    x0 = np.floor(cx)
    fy = cy - y0
    fx = cx - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    terms = []
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            terms.append((np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1), wy * wx, valid, dy, dx))
    return terms, fy, fx


def bilinear_forward(fmap, coords):
    n, c, h, w = fmap.shape
    _, p, _ = coords.shape
    out = np.zeros((n, p, c))
    bidx = np.arange(n)[:, None]
    terms, _, _ = _corner_terms(coords, h, w)
    for yy, xx, wgt, valid, _, _ in terms:
        vals = fmap[bidx, :, yy, xx] * valid[..., None]
        out += wgt[..., None] * vals
    return out


def bilinear_backward(fmap, coords, gout):
    n, c, h, w = fmap.shape
    gmap = np.zeros_like(fmap)
    gcoords = np.zeros_like(coords)
    bidx = np.arange(n)[:, None]
    terms, fy, fx = _corner_terms(coords, h, w)
    for yy, xx, wgt, valid, dy, dx in terms:
        vals = fmap[bidx, :, yy, xx] * valid[..., None]
        # d(weight)/dy is +-wx, d(weight)/dx is +-wy.
        wy = fy if dy == 1 else 1.0 - fy
        wx = fx if dx == 1 else 1.0 - fx
        sy = 1.0 if dy == 1 else -1.0
        sx = 1.0 if dx == 1 else -1.0
        gdotv = np.sum(gout * vals, axis=-1)
        gcoords[..., 0] += sy * wx * gdotv
        gcoords[..., 1] += sx * wy * gdotv
        contrib = gout * (wgt * valid)[..., None]
        np.add.at(gmap, (bidx, slice(None), yy, xx), contrib)
    return gmap, gcoords
