"""Hot-loop dispatch.

The compiled extension ``eulernet._kernels`` is used when it imports;
otherwise the numpy twins in ``eulernet._kernels_py`` take over. Set
``EULER_BACKEND=python`` to force the fallback (the benchmark and the
backend-parity tests do this per call via :func:`use_backend`).
"""

from __future__ import annotations

import contextlib
import logging
import os

import numpy as np

from . import _kernels_py

logger = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_impl = _BACKENDS["compiled" if _compiled is not None else "python"]
if os.environ.get("EULER_BACKEND", "").lower() == "python":
    _impl = _kernels_py


def backend_name() -> str:
    return "compiled" if _impl is _compiled and _compiled is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily route every kernel call through the named backend."""
    global _impl
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    prev, _impl = _impl, _BACKENDS[name]
    try:
        yield
    finally:
        _impl = prev


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a)


def conv3x3(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Zero-padded stride-1 3x3 cross-correlation, no bias. x: [N,C,H,W]."""
    N, _, H, W = x.shape
    out = np.zeros((N, w.shape[0], H, W), dtype=x.dtype)
    _impl.conv3x3_forward(_c(x), _c(w.astype(x.dtype, copy=False)), out)
    return out


def conv3x3_grad_input(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    # transposed correlation == correlation with the flipped, channel-swapped kernel
    wt = _c(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1].astype(g.dtype))
    N, _, H, W = g.shape
    out = np.zeros((N, w.shape[1], H, W), dtype=g.dtype)
    _impl.conv3x3_forward(_c(g), wt, out)
    return out


def conv3x3_grad_weight(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    gw = np.zeros((g.shape[1], x.shape[1], 3, 3), dtype=g.dtype)
    _impl.conv3x3_backward_weight(_c(x.astype(g.dtype, copy=False)), _c(g), gw)
    return gw


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    N, C, H, W = x.shape
    out = np.empty((N, C, H // 2, W // 2), dtype=x.dtype)
    arg = np.empty(out.shape, dtype=np.uint8)
    _impl.maxpool2_forward(_c(x), out, arg)
    return out, arg


def maxpool2_grad(g: np.ndarray, arg: np.ndarray) -> np.ndarray:
    N, C, Ho, Wo = g.shape
    gx = np.zeros((N, C, 2 * Ho, 2 * Wo), dtype=g.dtype)
    _impl.maxpool2_backward(_c(g), arg, gx)
    return gx


def diirf(x: np.ndarray, coef) -> np.ndarray:
    """Biquad recursion along axis 1 of x: [B,T,P]. coef = (b0,b1,b2,a1,a2)."""
    y = np.empty_like(x)
    _impl.diirf_forward(_c(x), *map(float, coef), y)
    return y


def diirf_grad(gy: np.ndarray, x: np.ndarray, y: np.ndarray, coef) -> tuple[np.ndarray, np.ndarray]:
    gx = np.empty_like(x)
    gcoef = np.zeros(5)
    _impl.diirf_backward(_c(gy.astype(x.dtype, copy=False)), _c(x), _c(y), *map(float, coef), gx, gcoef)
    return gx, gcoef


def all_finite(x: np.ndarray) -> bool:
    if x.dtype not in (np.float32, np.float64):
        return bool(np.isfinite(x).all())
    return bool(_impl.all_finite(_c(x).reshape(-1)))


def rasterize(poly_px: np.ndarray, height: int, width: int) -> np.ndarray:
    out = np.zeros((height, width), dtype=np.uint8)
    _impl.rasterize_evenodd(_c(np.asarray(poly_px, dtype=np.float64)), out)
    return out
