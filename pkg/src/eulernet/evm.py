"""Linear Eulerian video magnification.

Each frame is split into a Laplacian pyramid, every level except the finest
gets ``alpha`` times its temporally band-passed copy added back, and the
pyramid is collapsed. The temporal filter is the difference of two
first-order low-passes, so it has exactly zero DC gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, _up_axis

_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class EvmConfig:
    levels: int = 4
    f_low: float = 0.4
    f_high: float = 3.0
    fps: float = 30.0
    alpha: float = 10.0

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if not 0 < self.f_low < self.f_high < self.fps / 2:
            raise ValueError(
                f"need 0 < f_low < f_high < fps/2, got f_low={self.f_low}, f_high={self.f_high}, fps={self.fps}"
            )
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def lowpass_coefficient(cutoff: float, fps: float) -> float:
    """Smoothing factor k of y[n] = y[n-1] + k (x[n] - y[n-1])."""
    return 1.0 - np.exp(-2.0 * np.pi * cutoff / fps)


def lowpass_response(f, cutoff: float, fps: float):
    """Complex frequency response of the first-order low-pass at ``f`` Hz."""
    k = lowpass_coefficient(cutoff, fps)
    z_inv = np.exp(-2j * np.pi * np.asarray(f, dtype=np.float64) / fps)
    return k / (1 - (1 - k) * z_inv)


def bandpass_response(f, config: EvmConfig):
    return lowpass_response(f, config.f_high, config.fps) - lowpass_response(f, config.f_low, config.fps)


def _blur(img: np.ndarray) -> np.ndarray:
    # separable 5-tap binomial, reflected borders, over the last two axes
    out = img
    for axis in (-2, -1):
        pad = [(0, 0)] * img.ndim
        pad[axis] = (2, 2)
        p = np.pad(out, pad, mode="reflect")
        n = out.shape[axis]
        out = sum(w * np.take(p, np.arange(i, i + n), axis=axis) for i, w in enumerate(_BINOMIAL))
    return out


def _expand(img: np.ndarray) -> np.ndarray:
    return _up_axis(_up_axis(img, img.ndim - 2), img.ndim - 1)


def _check_extent(shape, levels: int) -> None:
    step = 2 ** (levels - 1)
    h, w = shape[-2:]
    if h % step or w % step:
        raise ShapeError(f"frame {h}x{w} is not divisible by 2^(levels-1) = {step}")


def build_gaussian_pyramid(frame: np.ndarray, levels: int) -> list[np.ndarray]:
    """Level 0 is ``frame``; each further level blurs then keeps every second pixel.

    Works on any array whose last two axes are H, W.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    frame = np.asarray(frame, dtype=np.float64)
    _check_extent(frame.shape, levels)
    pyr = [frame]
    for _ in range(levels - 1):
        pyr.append(_blur(pyr[-1])[..., ::2, ::2])
    return pyr


def build_laplacian_pyramid(frame: np.ndarray, levels: int) -> list[np.ndarray]:
    gauss = build_gaussian_pyramid(frame, levels)
    bands = [g - _expand(g_next) for g, g_next in zip(gauss, gauss[1:])]
    return bands + [gauss[-1]]


def collapse_laplacian(bands: list[np.ndarray]) -> np.ndarray:
    img = bands[-1]
    for band in reversed(bands[:-1]):
        img = band + _expand(img)
    return img


def temporal_bandpass(series: np.ndarray, config: EvmConfig) -> np.ndarray:
    """Band-pass along axis 0. Both low-pass states start at the first sample."""
    x = np.asarray(series, dtype=np.float64)
    if x.shape[0] < 4:
        raise ValueError(f"temporal_bandpass needs at least 4 samples, got {x.shape[0]}")
    kh = lowpass_coefficient(config.f_high, config.fps)
    kl = lowpass_coefficient(config.f_low, config.fps)
    hi = x[0].copy()
    lo = x[0].copy()
    out = np.empty_like(x)
    for n in range(x.shape[0]):
        hi += kh * (x[n] - hi)
        lo += kl * (x[n] - lo)
        out[n] = hi - lo
    return out


def magnify(clip: np.ndarray, config: EvmConfig = EvmConfig()) -> np.ndarray:
    """Magnify ``clip`` [T,C,H,W] with values in [0,1]; returns float64 in [0,1]."""
    clip = np.asarray(clip, dtype=np.float64)
    if clip.ndim != 4:
        raise ShapeError(f"magnify: expected [T,C,H,W], got {clip.shape}")
    _check_extent(clip.shape, config.levels)
    # the pyramid ops broadcast over leading axes, so the whole clip goes at once
    bands = build_laplacian_pyramid(clip, config.levels)
    if config.alpha:
        for lvl in range(1, len(bands)):
            bands[lvl] = bands[lvl] + config.alpha * temporal_bandpass(bands[lvl], config)
    return np.clip(collapse_laplacian(bands), 0.0, 1.0)


def fit_sinusoid(series: np.ndarray, freq: float, fps: float) -> float:
    """Least-squares amplitude of a ``freq`` Hz sinusoid (plus offset) in ``series``."""
    t = np.arange(len(series)) / fps
    basis = np.stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t), np.ones_like(t)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, np.asarray(series, dtype=np.float64), rcond=None)
    return float(np.hypot(coef[0], coef[1]))
