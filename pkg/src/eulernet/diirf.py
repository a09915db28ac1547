"""Trainable second-order IIR filter run along the frame axis of a feature map.

Per pixel, with state maps h1, h2 zeroed at the start of every sequence::

    y[n]  = b0*x[n] + h1[n-1]
    h1[n] = b1*x[n] + h2[n-1] - a1*y[n]
    h2[n] = b2*x[n] - a2*y[n]

The five coefficients are scalars shared by all pixels. Gradients flow
through every time step (BPTT) to the input and to each coefficient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import NonFiniteError, ShapeError, Tensor, _result

logger = logging.getLogger(__name__)

STABILITY_EPS = 1e-3
COEFF_NAMES = ("b0", "b1", "b2", "a1", "a2")


@dataclass
class BiquadParams:
    b0: Tensor
    b1: Tensor
    b2: Tensor
    a1: Tensor
    a2: Tensor

    @classmethod
    def from_values(cls, b0=1.0, b1=0.0, b2=0.0, a1=0.0, a2=0.0, requires_grad=True) -> "BiquadParams":
        vals = dict(b0=b0, b1=b1, b2=b2, a1=a1, a2=a2)
        return cls(**{k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in vals.items()})

    @classmethod
    def init(cls, rng: np.random.Generator, noise: float = 0.05) -> "BiquadParams":
        """Identity filter plus uniform noise in [-noise, noise] on every coefficient."""
        jitter = rng.uniform(-noise, noise, size=5)
        base = np.array([1.0, 0.0, 0.0, 0.0, 0.0]) + jitter
        return cls.from_values(*base)

    def tensors(self) -> list[Tensor]:
        return [getattr(self, k) for k in COEFF_NAMES]

    def values(self) -> tuple[float, ...]:
        return tuple(float(t.data) for t in self.tensors())

    def named(self) -> dict[str, Tensor]:
        return {k: getattr(self, k) for k in COEFF_NAMES}


def is_stable(a1: float, a2: float, eps: float = STABILITY_EPS) -> bool:
    """(a1, a2) inside the closed triangle |a2| <= 1-eps, |a1| <= 1+a2-eps."""
    return abs(a2) <= 1 - eps and abs(a1) <= 1 + a2 - eps


def _project_pair(a1: float, a2: float, eps: float) -> tuple[float, float]:
    a2 = min(max(a2, -(1 - eps)), 1 - eps)
    lim = 1 + a2 - eps
    a1 = min(max(a1, -lim), lim)
    return a1, a2


def _inward(value: float, ok, dtype) -> np.ndarray:
    # step toward zero one ulp at a time until the stored value passes ``ok``
    v = np.asarray(value, dtype=dtype)
    while not ok(float(v)):
        v = np.nextafter(v, dtype.type(0))
    return v


def stability_project(params: BiquadParams, eps: float = STABILITY_EPS) -> BiquadParams:
    """Clamp the feedback pair into the stability triangle, in place. Idempotent.

    The check holds for the values as stored, so float32 rounding cannot
    leave the pair a hair outside.
    """
    a1, a2 = _project_pair(float(params.a1.data), float(params.a2.data), eps)
    a2s = _inward(a2, lambda v: abs(v) <= 1 - eps, params.a2.dtype)
    a1s = _inward(a1, lambda v: abs(v) <= 1 + float(a2s) - eps, params.a1.dtype)
    params.a1.data, params.a2.data = a1s, a2s
    return params


def diirf_forward(x: Tensor, params: BiquadParams) -> Tensor:
    """Filter ``x`` along its frame axis.

    ``x`` is [T,H,W] for one sequence or [B,T,H,W] for a batch of
    independent sequences; state never crosses a sequence boundary.
    """
    if x.ndim not in (3, 4):
        raise ShapeError(f"diirf_forward: expected [T,H,W] or [B,T,H,W], got {x.shape}")
    if x.shape[-3] < 1:
        raise ShapeError("diirf_forward: T must be >= 1")
    if not kernels.all_finite(x.data):
        raise NonFiniteError("diirf_forward: input contains NaN or Inf")
    coef = params.values()
    if not is_stable(coef[3], coef[4], 0.0):
        logger.warning("DIIRF feedback (a1=%.4g, a2=%.4g) is outside the stability triangle", coef[3], coef[4])

    shape = x.shape
    T = shape[-3]
    flat = x.data.reshape(-1, T, shape[-2] * shape[-1])
    y = kernels.diirf(flat, coef)

    def back(g):
        gx, gcoef = kernels.diirf_grad(g.reshape(flat.shape), flat, y, coef)
        coef_grads = tuple(np.asarray(gc, dtype=t.dtype) for gc, t in zip(gcoef, params.tensors()))
        return (gx.reshape(shape),) + coef_grads

    return _result(y.reshape(shape), (x, *params.tensors()), back)
