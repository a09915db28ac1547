"""Parameterised building blocks: 3x3 conv, FCAM and the residual pyramid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diirf import BiquadParams, diirf_forward
from .tensor import (
    ShapeError,
    Tensor,
    concat_channels,
    conv2d_3x3,
    downsample2,
    mul,
    reshape,
    sigmoid,
    sub,
    upsample2,
)


@dataclass
class Conv3x3:
    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, cin: int, cout: int) -> "Conv3x3":
        # He fan-in scaling, zero bias
        std = np.sqrt(2.0 / (cin * 9))
        w = rng.standard_normal((cout, cin, 3, 3)) * std
        return cls(Tensor(w, requires_grad=True, name="weight"),
                   Tensor(np.zeros(cout), requires_grad=True, name="bias"))

    @property
    def cin(self) -> int:
        return self.weight.shape[1]

    @property
    def cout(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_3x3(x, self.weight, self.bias)

    def named(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


@dataclass
class FcamLayer:
    """Channel squash (C -> 1), temporal DIIRF, sigmoid gate, multiply back."""

    squash: Conv3x3
    filter: BiquadParams

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int) -> "FcamLayer":
        return cls(Conv3x3.init(rng, channels, 1), BiquadParams.init(rng))

    def named(self) -> dict[str, Tensor]:
        out = {f"squash.{k}": v for k, v in self.squash.named().items()}
        out.update({f"diirf.{k}": v for k, v in self.filter.named().items()})
        return out

    def gate(self, features: Tensor, seq_len: int) -> Tensor:
        N, C, H, W = features.shape
        if C != self.squash.cin:
            raise ShapeError(f"fcam: features have C={C}, squash conv expects {self.squash.cin}")
        if N % seq_len:
            raise ShapeError(f"fcam: N={N} is not a multiple of the sequence length {seq_len}")
        squashed = self.squash(features)
        seq = reshape(squashed, (N // seq_len, seq_len, H, W))
        filtered = diirf_forward(seq, self.filter)
        return sigmoid(reshape(filtered, (N, 1, H, W)))

    def __call__(self, features: Tensor, seq_len: int | None = None) -> Tensor:
        return fcam_forward(features, self, seq_len)


def fcam_forward(features: Tensor, layer: FcamLayer, seq_len: int | None = None) -> Tensor:
    """Gate ``features`` ([B*T,C,H,W], frames of one sequence contiguous) by its own
    temporally filtered one-channel summary.

    With ``seq_len`` omitted the whole leading axis is one sequence.
    """
    if features.ndim != 4:
        raise ShapeError(f"fcam: expected [T,C,H,W], got {features.shape}")
    T = seq_len or features.shape[0]
    return mul(features, layer.gate(features, T))


@dataclass
class ResidualPyramid:
    conv128: Conv3x3
    conv64: Conv3x3

    @classmethod
    def init(cls, rng: np.random.Generator, channels: int, out_channels: int = 8) -> "ResidualPyramid":
        return cls(Conv3x3.init(rng, channels, out_channels), Conv3x3.init(rng, channels, out_channels))

    @property
    def out_channels(self) -> int:
        return self.conv128.cout + self.conv64.cout

    def named(self) -> dict[str, Tensor]:
        out = {f"conv128.{k}": v for k, v in self.conv128.named().items()}
        out.update({f"conv64.{k}": v for k, v in self.conv64.named().items()})
        return out

    def __call__(self, f128: Tensor, f64: Tensor, f32: Tensor) -> Tensor:
        return pyramid_fuse(f128, f64, f32, self.conv128, self.conv64)


def _check_levels(f128: Tensor, f64: Tensor, f32: Tensor) -> None:
    for name, t in (("f128", f128), ("f64", f64), ("f32", f32)):
        if t.ndim != 4:
            raise ShapeError(f"pyramid_fuse: {name} must be N,C,H,W, got {t.shape}")
    if not (f128.shape[0] == f64.shape[0] == f32.shape[0]):
        raise ShapeError("pyramid_fuse: batch size differs across levels")
    for hi, lo, hname, lname in ((f128, f64, "f128", "f64"), (f64, f32, "f64", "f32")):
        if hi.shape[2] != 2 * lo.shape[2] or hi.shape[3] != 2 * lo.shape[3]:
            raise ShapeError(f"pyramid_fuse: {hname} {hi.shape[2:]} is not twice {lname} {lo.shape[2:]}")
        if hi.shape[1] != lo.shape[1]:
            raise ShapeError(
                f"pyramid_fuse: channel mismatch, {hname} has {hi.shape[1]} but upsampled {lname} has {lo.shape[1]}"
            )


def pyramid_fuse(f128: Tensor, f64: Tensor, f32: Tensor, conv128: Conv3x3, conv64: Conv3x3) -> Tensor:
    """Residuals against the upsampled coarser level, convolved, pooled to the
    coarsest grid and stacked with it.

    The finest residual needs two halvings to reach the coarsest grid.
    Level names refer to the default 128/64/32 grid; any 4:2:1 extents work.
    """
    _check_levels(f128, f64, f32)
    s128 = conv128(sub(f128, upsample2(f64)))
    s64 = conv64(sub(f64, upsample2(f32)))
    return concat_channels([downsample2(downsample2(s128)), downsample2(s64), f32])


def concat_fuse(f128: Tensor, f64: Tensor, f32: Tensor) -> Tensor:
    """Pyramid-free fusion (plain channel concatenation at the coarsest grid)."""
    return concat_channels([downsample2(downsample2(f128)), downsample2(f64), f32])
