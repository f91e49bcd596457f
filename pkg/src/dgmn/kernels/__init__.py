"""Kernel dispatch between the numba loop backend and the numpy fallback.

DGMN_BACKEND selects the path: "numba", "numpy", or "auto" (default; numba
when importable). DGMN_THREADS caps numba's thread pool, default 1: all
kernels are sequential, so results never depend on the thread count.

DGMN_MUTATE is a verification fixture: a comma-separated list of named
defects injected on purpose so the gradient suite can prove it catches them.
Supported: "bilinear-grad-sign" (flips the sampled-coordinate gradient).
"""

from __future__ import annotations

import os

from . import numpy_backend

_requested = os.environ.get("DGMN_BACKEND", "auto").lower()
_numba_backend = None
if _requested in ("auto", "numba"):
    try:
        from . import numba_backend as _numba_backend

        if "DGMN_THREADS" in os.environ:
            try:
                import numba

                numba.set_num_threads(max(1, int(os.environ["DGMN_THREADS"])))
            except (ValueError, ImportError):
                pass
    except ImportError:
        if _requested == "numba":
            raise
        _numba_backend = None

_impl = _numba_backend if _numba_backend is not None else numpy_backend

_MUTATIONS = frozenset(
    m.strip() for m in os.environ.get("DGMN_MUTATE", "").split(",") if m.strip()
)


def backend_name() -> str:
    return "numba" if _impl is not numpy_backend else "numpy"


def _pointwise(w, padding):
    # 1x1 kernels without padding reduce to a matmul; both backends route
    # them through BLAS, which beats a scalar loop by an order of magnitude.
    return w.shape[2] == 1 and w.shape[3] == 1 and padding == 0


def conv2d_forward(x, w, stride, padding, dilation, groups):
    if _pointwise(w, padding):
        return numpy_backend.pointwise_forward(x, w, stride, groups)
    return _impl.conv2d_forward(x, w, stride, padding, dilation, groups)


def conv2d_backward_input(gy, w, x_shape, stride, padding, dilation, groups):
    if _pointwise(w, padding):
        return numpy_backend.pointwise_backward_input(gy, w, x_shape, stride, groups)
    return _impl.conv2d_backward_input(gy, w, x_shape, stride, padding, dilation, groups)


def conv2d_backward_weight(gy, x, w_shape, stride, padding, dilation, groups):
    if w_shape[2] == 1 and w_shape[3] == 1 and padding == 0:
        return numpy_backend.pointwise_backward_weight(gy, x, w_shape, stride, groups)
    return _impl.conv2d_backward_weight(gy, x, w_shape, stride, padding, dilation, groups)


def bilinear_forward(fmap, coords):
    return _impl.bilinear_forward(fmap, coords)


def bilinear_backward(fmap, coords, gout):
    gmap, gcoords = _impl.bilinear_backward(fmap, coords, gout)
    if "bilinear-grad-sign" in _MUTATIONS:
        gcoords = -gcoords
    return gmap, gcoords
