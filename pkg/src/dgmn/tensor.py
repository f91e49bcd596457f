"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation builds a node holding its parents and a closure that routes
the output gradient back to them. ``backward`` walks the graph once in
reverse topological order; running it twice on the same root is an error.
All data is float64: the package exists to verify numerics, not to be fast,
and gradient checks need the headroom.
"""

from __future__ import annotations

import math
import os
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import ConfigError, GraphError, ShapeError

_DEBUG = os.environ.get("DGMN_DEBUG", "0") not in ("0", "", "false")

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor(object):
    """N-dimensional float64 array with an optional gradient buffer."""

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._backward_ran = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self):
        backward(self)

    # Operator sugar; the module-level functions carry the real logic.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), scale(self, -1.0))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not provided")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if len(axes) != 1 else axes[0])


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def make_node(data, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Create an op output wired into the graph (package-internal)."""
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite value produced by a forward op")
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None):
    """Populate gradients of everything reachable from a scalar loss.

    ``params``, when given, are leaves that must end up with a grad buffer
    even if the loss does not depend on them (they get zeros).
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._backward_ran:
        raise GraphError("backward already ran on this graph; rebuild it to run again")
    loss._backward_ran = True

    topo: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def zero_grads(params: Iterable[Tensor]):
    for p in params:
        p.grad = None


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return make_node(out_data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return make_node(out_data, (a, b), back)


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * s)

    return make_node(a.data * s, (a,), back)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if not a.requires_grad:
            return
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape))
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(gg, a.data.shape))

    return make_node(out_data, (a,), back)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        denom = a.data.size
    else:
        denom = a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / denom)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out_data = a.data.reshape(shape)

    def back(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.data.shape))

    return make_node(out_data, (a,), back)


def transpose(a, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = np.transpose(a.data, axes)

    def back(g):
        if a.requires_grad:
            _accumulate(a, np.transpose(g, inv))

    return make_node(out_data, (a,), back)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; gradient zero-pads back."""
    a = _as_tensor(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out_data = a.data[index]

    def back(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            _accumulate(a, full)

    return make_node(np.ascontiguousarray(out_data), (a,), back)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.data.shape} vs {b.data.shape}")
    out_data = a.data @ b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return make_node(out_data, (a, b), back)


def einsum2(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum. Each index may appear once per operand and every
    operand index must appear in the output or the other operand, which makes
    the gradients plain einsums with the roles rotated."""
    a, b = _as_tensor(a), _as_tensor(b)
    lhs, out_spec = subscripts.replace(" ", "").split("->")
    a_spec, b_spec = lhs.split(",")
    out_data = np.einsum(subscripts, a.data, b.data, optimize=True)

    def back(g):
        if a.requires_grad:
            ga = np.einsum(f"{out_spec},{b_spec}->{a_spec}", g, b.data, optimize=True)
            _accumulate(a, ga)
        if b.requires_grad:
            gb = np.einsum(f"{out_spec},{a_spec}->{b_spec}", g, a.data, optimize=True)
            _accumulate(b, gb)

    return make_node(out_data, (a, b), back)


# -------------------------------------------------------------- nonlinearity


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * mask)

    return make_node(np.where(mask, a.data, 0.0), (a,), back)


def gelu(a) -> Tensor:
    """Exact erf form of the Gaussian error linear unit."""
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = x * cdf

    def back(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
            _accumulate(a, g * (cdf + x * pdf))

    return make_node(out_data, (a,), back)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        if a.requires_grad:
            dot = np.sum(g * y, axis=axis, keepdims=True)
            _accumulate(a, (g - dot) * y)

    return make_node(y, (a,), back)


# ------------------------------------------------------------- normalization


def layer_norm(a, gamma, beta, eps: float = 1e-5, axis: int = -1) -> Tensor:
    """Standardize along one axis (default last), then apply the affine pair."""
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    a, gamma, beta = _as_tensor(a), _as_tensor(gamma), _as_tensor(beta)
    axis = axis % a.data.ndim
    m = a.data.shape[axis]
    if gamma.data.shape != (m,) or beta.data.shape != (m,):
        raise ShapeError(
            f"layer_norm affine shape {gamma.data.shape} does not match extent {m}"
        )
    mu = a.data.mean(axis=axis, keepdims=True)
    var = a.data.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    bshape = [1] * a.data.ndim
    bshape[axis] = m
    gph = gamma.data.reshape(bshape)
    out_data = xhat * gph + beta.data.reshape(bshape)
    reduce_axes = tuple(i for i in range(a.data.ndim) if i != axis)

    def back(g):
        if gamma.requires_grad:
            _accumulate(gamma, np.sum(g * xhat, axis=reduce_axes))
        if beta.requires_grad:
            _accumulate(beta, np.sum(g, axis=reduce_axes))
        if a.requires_grad:
            gx = g * gph
            term = gx - gx.mean(axis=axis, keepdims=True)
            term -= xhat * np.mean(gx * xhat, axis=axis, keepdims=True)
            _accumulate(a, term * inv)

    return make_node(out_data, (a, gamma, beta), back)


def batch_norm(
    a,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch norm on NCHW maps.

    Training mode normalizes by batch statistics and folds them into the
    running buffers in place; inference mode uses the running buffers.
    """
    if eps <= 0:
        raise ConfigError(f"batch_norm eps must be positive, got {eps}")
    a, gamma, beta = _as_tensor(a), _as_tensor(gamma), _as_tensor(beta)
    c = a.data.shape[1]
    axes = (0, 2, 3)
    bshape = (1, c, 1, 1)
    if training:
        mu = a.data.mean(axis=axes)
        var = a.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu.reshape(bshape)) * inv.reshape(bshape)
    out_data = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def back(g):
        if gamma.requires_grad:
            _accumulate(gamma, np.sum(g * xhat, axis=axes))
        if beta.requires_grad:
            _accumulate(beta, np.sum(g, axis=axes))
        if a.requires_grad:
            gx = g * gamma.data.reshape(bshape)
            if training:
                term = gx - gx.mean(axis=axes, keepdims=True)
                term -= xhat * np.mean(gx * xhat, axis=axes, keepdims=True)
                _accumulate(a, term * inv.reshape(bshape))
            else:
                _accumulate(a, gx * inv.reshape(bshape))

    return make_node(out_data, (a, gamma, beta), back)


# ----------------------------------------------------------------- conv, pool


def conv2d(
    x,
    w,
    b=None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
    groups: int = 1,
) -> Tensor:
    """Cross-correlation with zero padding, strides, dilation and groups."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIHW kernel, got {x.data.shape} and {w.data.shape}")
    n, cin, h, ww_ = x.data.shape
    cout, cg, kh, kw = w.data.shape
    if dilation < 1 or stride < 1:
        raise ConfigError(f"conv2d stride/dilation must be >= 1, got {stride}/{dilation}")
    if cin % groups != 0 or cout % groups != 0:
        raise ConfigError(f"groups={groups} must divide both C_in={cin} and C_out={cout}")
    if cg != cin // groups:
        raise ShapeError(
            f"kernel shape {w.data.shape} inconsistent with input shape {x.data.shape} at groups={groups}"
        )
    ho = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (ww_ + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(
            f"conv2d output would be empty for input {x.data.shape} and kernel {w.data.shape}"
        )
    y = kernels.conv2d_forward(x.data, w.data, stride, padding, dilation, groups)
    parents = [x, w]
    if b is not None:
        b = _as_tensor(b)
        if b.data.shape != (cout,):
            raise ShapeError(f"conv2d bias shape {b.data.shape} does not match C_out={cout}")
        y = y + b.data.reshape(1, cout, 1, 1)
        parents.append(b)

    def back(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            _accumulate(
                x,
                kernels.conv2d_backward_input(g, w.data, x.data.shape, stride, padding, dilation, groups),
            )
        if w.requires_grad:
            _accumulate(
                w,
                kernels.conv2d_backward_weight(g, x.data, w.data.shape, stride, padding, dilation, groups),
            )
        if b is not None and b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 2, 3)))

    return make_node(y, parents, back)


def global_average_pool(a) -> Tensor:
    a = _as_tensor(a)
    n, c, h, w = a.data.shape
    out_data = a.data.mean(axis=(2, 3))

    def back(g):
        if a.requires_grad:
            _accumulate(a, np.broadcast_to(g[:, :, None, None] / (h * w), a.data.shape))

    return make_node(out_data, (a,), back)


# ----------------------------------------------------------------------- loss


def cross_entropy_loss(logits, labels) -> Tensor:
    """Mean negative log-likelihood; class axis is 1 (or the only axis for 1-D).

    Accepts [N, K] logits with [N] integer labels, or dense [N, K, H, W]
    logits with [N, H, W] labels.
    """
    logits = _as_tensor(logits)
    labels = np.asarray(labels)
    x = logits.data
    if x.ndim == 2:
        xm = x - x.max(axis=1, keepdims=True)
        lse = np.log(np.exp(xm).sum(axis=1, keepdims=True))
        logp = xm - lse
        n = x.shape[0]
        picked = logp[np.arange(n), labels]
        out_data = -picked.mean()

        def back(g):
            if logits.requires_grad:
                p = np.exp(logp)
                p[np.arange(n), labels] -= 1.0
                _accumulate(logits, g * p / n)

        return make_node(np.asarray(out_data), (logits,), back)
    if x.ndim == 4:
        xm = x - x.max(axis=1, keepdims=True)
        lse = np.log(np.exp(xm).sum(axis=1, keepdims=True))
        logp = xm - lse
        n, k, h, w = x.shape
        onehot = np.zeros_like(x)
        ii = np.arange(n)[:, None, None]
        hh = np.arange(h)[None, :, None]
        ww_ = np.arange(w)[None, None, :]
        onehot[ii, labels, hh, ww_] = 1.0
        count = n * h * w
        out_data = -(logp * onehot).sum() / count

        def back(g):
            if logits.requires_grad:
                _accumulate(logits, g * (np.exp(logp) - onehot) / count)

        return make_node(np.asarray(out_data), (logits,), back)
    raise ShapeError(f"cross_entropy_loss expects 2-D or 4-D logits, got {x.shape}")


# ----------------------------------------------------------- gradient checks


def finite_diff_grad(f, p: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``p``.

    ``f`` receives a fresh non-grad Tensor and must return a scalar Tensor
    (or float). Deterministic ``f`` is assumed.
    """
    base = p.data.copy()
    flat = base.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(Tensor(base.reshape(p.data.shape)))
        fp = fp.item() if isinstance(fp, Tensor) else float(fp)
        flat[i] = orig - eps
        fm = f(Tensor(base.reshape(p.data.shape)))
        fm = fm.item() if isinstance(fm, Tensor) else float(fm)
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * eps)
    return out.reshape(p.data.shape)
