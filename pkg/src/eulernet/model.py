"""EulerNet assembly: shared per-frame backbone with FCAM between levels,
residual-pyramid fusion, a one-channel sigmoid head and video scoring."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from . import layers
from .data import ClipTooShortError, SamplerConfig, sample_sequences
from .layers import Conv3x3, FcamLayer, ResidualPyramid
from .tensor import (
    ShapeError,
    Tensor,
    as_tensor,
    max_pool2,
    mean,
    mse,
    no_grad,
    relu,
    reshape,
    sigmoid,
    sub,
)

INPUT_CENTER = 0.5


@dataclass
class EulerNetConfig:
    stem_channels: int = 16
    level_channels: tuple[int, int, int] = (16, 16, 16)
    convs_per_level: int = 2
    residual_conv_channels: int = 8
    sequence_length: int = 4
    frame_interval: int = 3
    input_size: int = 256
    use_fcam: bool = True
    use_pyramid: bool = True
    # how per-frame maps collapse to the fused map: "mean" or "last"
    frame_reduce: str = "mean"

    def __post_init__(self):
        self.level_channels = tuple(int(c) for c in self.level_channels)
        self.validate()

    def validate(self) -> None:
        if len(self.level_channels) != 3:
            raise ValueError("level_channels needs exactly three entries")
        if self.use_pyramid and len(set(self.level_channels)) != 1:
            raise ValueError(f"adjacent level channels must match for the residual subtraction: {self.level_channels}")
        if self.input_size % 8 or self.input_size < 8:
            raise ValueError(f"input_size {self.input_size} must be a positive multiple of 8")
        if self.convs_per_level < 0 or self.stem_channels < 1:
            raise ValueError("stem_channels >= 1 and convs_per_level >= 0 required")
        if self.convs_per_level == 0 and len({self.stem_channels, *self.level_channels}) != 1:
            raise ValueError("with convs_per_level=0 every level inherits stem_channels")
        if self.sequence_length < 1 or self.frame_interval < 1:
            raise ValueError("sequence_length and frame_interval must be >= 1")
        if self.frame_reduce not in ("mean", "last"):
            raise ValueError(f"frame_reduce must be 'mean' or 'last', not {self.frame_reduce!r}")

    @property
    def map_size(self) -> int:
        return self.input_size // 8

    @property
    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.sequence_length, self.frame_interval)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["level_channels"] = list(self.level_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EulerNetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def tiny_config(**overrides) -> EulerNetConfig:
    """Small backbone used by the desk-scale overfit check."""
    base = dict(stem_channels=4, level_channels=(16, 16, 16), convs_per_level=1)
    base.update(overrides)
    return EulerNetConfig(**base)


@dataclass
class PredictionOutput:
    per_frame_maps: Tensor  # [T,h,w] (or [B,T,h,w] when batched)
    fused_map: Tensor  # [h,w] (or [B,h,w])
    score: Tensor  # scalar (or [B])
    stages: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_maps(cls, per_frame_maps, reduce: str = "mean") -> "PredictionOutput":
        maps = as_tensor(per_frame_maps)
        t_axis = maps.ndim - 3
        if reduce == "last":
            fused = Tensor(maps.data.take(-1, axis=t_axis))
        else:
            fused = mean(maps, axis=t_axis)
        return cls(maps, fused, mean(fused, axis=(fused.ndim - 2, fused.ndim - 1)))


@dataclass
class EulerNet:
    config: EulerNetConfig
    stem: Conv3x3
    levels: list[list[Conv3x3]]
    fcams: list[FcamLayer]
    pyramid: ResidualPyramid | None
    head: Conv3x3

    @classmethod
    def init(cls, config: EulerNetConfig, seed: int = 0) -> "EulerNet":
        rng = np.random.default_rng(seed)
        stem = Conv3x3.init(rng, 3, config.stem_channels)
        levels, fcams = [], []
        cin = config.stem_channels
        for ch in config.level_channels:
            convs = []
            for _ in range(config.convs_per_level):
                convs.append(Conv3x3.init(rng, cin, ch))
                cin = ch
            levels.append(convs)
            fcams.append(FcamLayer.init(rng, cin))
        c = config.level_channels[-1] if config.convs_per_level else config.stem_channels
        if config.use_pyramid:
            pyramid = ResidualPyramid.init(rng, c, config.residual_conv_channels)
            fused_ch = pyramid.out_channels + c
        else:
            pyramid = None
            fused_ch = 3 * c
        head = Conv3x3.init(rng, fused_ch, 1)
        return cls(config, stem, levels, fcams, pyramid, head)

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update({f"stem.{k}": v for k, v in self.stem.named().items()})
        for i, convs in enumerate(self.levels, start=1):
            for j, conv in enumerate(convs):
                out.update({f"level{i}.conv{j}.{k}": v for k, v in conv.named().items()})
            if self.config.use_fcam:
                out.update({f"level{i}.fcam.{k}": v for k, v in self.fcams[i - 1].named().items()})
        if self.pyramid is not None:
            out.update({f"pyramid.{k}": v for k, v in self.pyramid.named().items()})
        out.update({f"head.{k}": v for k, v in self.head.named().items()})
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return int(np.sum([p.data.size for p in self.parameters()]))

    def biquads(self) -> dict[str, "layers.BiquadParams"]:
        if not self.config.use_fcam:
            return {}
        return {f"level{i}.fcam.diirf": f.filter for i, f in enumerate(self.fcams, start=1)}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def forward_frames(self, frames: Tensor, seq_len: int, capture: bool = False):
        """Run [B*T,3,S,S] (frames of each sequence contiguous) to per-frame maps [B*T,1,s,s]."""
        cfg = self.config
        # centred pixels keep about half the stem units active at init
        x = relu(self.stem(sub(frames, INPUT_CENTER)))
        feats = []
        for i, convs in enumerate(self.levels):
            for conv in convs:
                x = relu(conv(x))
            if cfg.use_fcam:
                x = self.fcams[i](x, seq_len)
            x = max_pool2(x)
            feats.append(x)
        f128, f64, f32 = feats
        fused = self.pyramid(f128, f64, f32) if self.pyramid is not None else layers.concat_fuse(f128, f64, f32)
        maps = sigmoid(self.head(fused))
        stages = {}
        if capture:
            stages = {"f128": f128.data, "f64": f64.data, "f32": f32.data, "fusion": fused.data}
        return maps, stages

    def forward(self, clip, capture: bool = False) -> PredictionOutput:
        """clip: [T,3,S,S] for one sequence or [B,T,3,S,S] for a batch."""
        cfg = self.config
        clip = as_tensor(clip)
        batched = clip.ndim == 5
        if clip.ndim not in (4, 5):
            raise ShapeError(f"forward: clip must be [T,3,S,S] or [B,T,3,S,S], got {clip.shape}")
        T, C, H, W = clip.shape[-4:]
        if T != cfg.sequence_length:
            raise ShapeError(f"forward: clip has T={T}, config expects {cfg.sequence_length}")
        if C != 3 or H != cfg.input_size or W != cfg.input_size:
            raise ShapeError(f"forward: frames must be 3x{cfg.input_size}x{cfg.input_size}, got {C}x{H}x{W}")
        B = clip.shape[0] if batched else 1
        maps, stages = self.forward_frames(reshape(clip, (B * T, C, H, W)), T, capture)
        s = cfg.map_size
        per_frame = reshape(maps, (B, T, s, s) if batched else (T, s, s))
        out = PredictionOutput.from_maps(per_frame, cfg.frame_reduce)
        if capture:
            out.stages = {k: v.reshape((B, T) + v.shape[1:]) if batched else v for k, v in stages.items()}
            out.stages["predicted"] = out.fused_map.data
        return out

    __call__ = forward


def loss(pred: PredictionOutput, target) -> Tensor:
    """Mean over frames of the per-frame MSE against one shared target map."""
    maps = pred.per_frame_maps
    tgt = np.asarray(getattr(target, "values", target), dtype=maps.dtype)
    if tgt.shape[-2:] != maps.shape[-2:]:
        raise ShapeError(f"loss: target is {tgt.shape[-2:]}, prediction maps are {maps.shape[-2:]}")
    if maps.ndim == 4:
        if tgt.ndim == 2:
            tgt = np.broadcast_to(tgt, (maps.shape[0],) + tgt.shape)
        if tgt.shape[0] != maps.shape[0]:
            raise ShapeError(f"loss: {tgt.shape[0]} targets for a batch of {maps.shape[0]}")
        tgt = tgt[:, None]
    elif tgt.ndim != 2:
        raise ShapeError(f"loss: expected a single 2-D target, got {tgt.shape}")
    return mse(maps, tgt)


def score_sequences(model: EulerNet, clips: np.ndarray, batch: int = 4) -> np.ndarray:
    """Live scores for an array of clips [K,T,3,S,S]."""
    scores = []
    with no_grad():
        for i in range(0, len(clips), batch):
            chunk = Tensor(clips[i:i + batch])
            scores.append(np.atleast_1d(model.forward(chunk).score.data))
    return np.concatenate(scores).astype(np.float64)


def predict_video(frames, model: EulerNet, batch: int = 4) -> float:
    """Average live score over the non-overlapping sequences of a video.

    ``frames`` is an ordered [N,3,S,S] array (or anything stackable to it).
    """
    frames = np.asarray(frames)
    idx = sample_sequences(len(frames), model.config.sampler, mode="eval_nonoverlap")
    if not idx:
        span = (model.config.sequence_length - 1) * model.config.frame_interval + 1
        raise ClipTooShortError(f"video has {len(frames)} frames, need at least {span}")
    clips = np.stack([frames[list(ix)] for ix in idx])
    return float(score_sequences(model, clips, batch).mean())
