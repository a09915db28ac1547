"""Training loop: sequence batches, L2 map loss, Ranger updates, checkpoints."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import data, netpbm
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .diirf import stability_project
from .model import EulerNet, EulerNetConfig, loss as map_loss
from .optim import RangerConfig, RangerState, ranger_step
from .supervision import make_target
from .tensor import Tensor, check_finite

logger = logging.getLogger(__name__)

LOSS_CSV = "loss.csv"
CHECKPOINT_NAME = "checkpoint.eulckpt"


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 50
    seed: int = 0
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    stability_projection: bool = True
    hflip: bool = False
    max_steps: int | None = None
    # stop once the mean batch loss of a completed epoch falls below this
    target_loss: float | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.lookahead_alpha <= 1:
            raise ValueError("lookahead_alpha must lie in (0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def ranger(self) -> RangerConfig:
        return RangerConfig(lr=self.lr, lookahead_k=self.lookahead_k, lookahead_alpha=self.lookahead_alpha)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def images_per_update(batch_size: int, sequence_length: int) -> int:
    return batch_size * sequence_length


@dataclass
class Video:
    video_id: str
    label: str
    frames: np.ndarray  # raw uint8 [N,H,W,3]
    target: np.ndarray  # [s,s] float


def load_split(manifest_path, model_cfg: EulerNetConfig, split: str | None = "train") -> list[Video]:
    """Decode every record of ``split`` (all records if None) once."""
    records = data.load_manifest(manifest_path)
    if split is not None:
        records = [r for r in records if r.split == split]
    if not records:
        raise data.ManifestError(f"{manifest_path}: no records for split {split!r}")
    span = model_cfg.sampler.span
    videos = []
    for rec in records:
        fdir = data.resolve(manifest_path, rec.frames_dir)
        n = data.count_frames(fdir)
        if n < span:
            raise data.ClipTooShortError(f"{rec.video_id}: {n} frames in {fdir}, need at least {span}")
        frames = np.stack([netpbm.read_pnm(fdir / data.FRAME_PATTERN.format(i)) for i in range(n)])
        depth = data.resolve(manifest_path, rec.depth_dir)
        target = make_target(rec.target_kind, rec.label, model_cfg.map_size, rec.landmarks,
                             None if depth is None else depth / "depth.pgm")
        videos.append(Video(rec.video_id, rec.label, frames, target.values))
    return videos


def clip_tensor(video: Video, indices, size: int, flip: bool = False) -> np.ndarray:
    clip = np.stack([data.frame_to_input(video.frames[i], size) for i in indices])
    return clip[..., ::-1].copy() if flip else clip


def model_checkpoint(model: EulerNet, state: RangerState | None = None, train_cfg: TrainConfig | None = None,
                     step: int = 0) -> Checkpoint:
    tensors = {name: p.data.copy() for name, p in model.named_parameters().items()}
    if state is not None:
        for kind in ("m", "v", "slow"):
            for name, arr in getattr(state, kind).items():
                tensors[f"optim.{kind}.{name}"] = arr
    config = {"model": model.config.to_dict()}
    if train_cfg is not None:
        config["train"] = train_cfg.to_dict()
    return Checkpoint(tensors, config, step)


def model_from_checkpoint(ckpt: Checkpoint | str | os.PathLike) -> EulerNet:
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    model = EulerNet.init(EulerNetConfig.from_dict(ckpt.config["model"]))
    params = model.named_parameters()
    stored = ckpt.parameters()
    if set(params) != set(stored):
        missing, extra = sorted(set(params) - set(stored)), sorted(set(stored) - set(params))
        raise ValueError(f"checkpoint does not fit the model: missing {missing}, unexpected {extra}")
    for name, p in params.items():
        if stored[name].shape != p.shape:
            raise ValueError(f"checkpoint tensor {name} has shape {stored[name].shape}, model expects {p.shape}")
        p.data = stored[name].copy()
    return model


@dataclass
class TrainResult:
    model: EulerNet
    checkpoint: Checkpoint
    losses: list[float] = field(default_factory=list)
    images_per_update: list[int] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.losses)


def _write_loss_row(fh, step: int, value: float) -> None:
    fh.write(f"{step},{value!r}\n")
    fh.flush()


def train(config: TrainConfig, model_cfg: EulerNetConfig, manifest, out_dir: str | os.PathLike | None = None,
          on_step: Callable[[int, float, EulerNet], None] | None = None,
          videos: list[Video] | None = None) -> TrainResult:
    """Train from scratch on the ``train`` split of ``manifest``.

    Writes ``loss.csv`` and, after every epoch, ``checkpoint.eulckpt`` into
    ``out_dir`` when given. ``on_step(step, loss, model)`` runs after each
    optimizer step (and after the stability projection).
    """
    if videos is None:
        videos = load_split(manifest, model_cfg, "train")
    if not videos:
        raise data.ManifestError("training set is empty")
    rng = np.random.default_rng(config.seed)
    model = EulerNet.init(model_cfg, seed=config.seed)
    params = model.named_parameters()
    state = RangerState()
    ranger = config.ranger()
    sampler = model_cfg.sampler
    steps_per_epoch = math.ceil(len(videos) / config.batch_size)

    out = Path(out_dir) if out_dir is not None else None
    csv_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        csv_fh = open(out / LOSS_CSV, "w", encoding="utf-8")
        csv_fh.write("step,loss\n")

    result = TrainResult(model, model_checkpoint(model, state, config))
    t0 = time.perf_counter()
    step = 0
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(len(videos))
            epoch_losses = []
            for b in range(steps_per_epoch):
                if config.max_steps is not None and step >= config.max_steps:
                    break
                batch = [videos[i] for i in order[b * config.batch_size:(b + 1) * config.batch_size]]
                clips, targets = [], []
                for v in batch:
                    idx = data.sample_sequences(len(v.frames), sampler, "train_random", rng)[0]
                    flip = bool(config.hflip and rng.random() < 0.5)
                    clips.append(clip_tensor(v, idx, model_cfg.input_size, flip))
                    targets.append(v.target[:, ::-1] if flip else v.target)
                clip_arr = np.stack(clips)
                result.images_per_update.append(clip_arr.shape[0] * clip_arr.shape[1])

                model.zero_grad()
                pred = model.forward(Tensor(clip_arr))
                L = map_loss(pred, np.stack(targets))
                check_finite(L, f"loss at step {step + 1}")
                L.backward()
                grads = {name: p.grad for name, p in params.items()}
                ranger_step(params, grads, state, ranger)
                if config.stability_projection:
                    for bq in model.biquads().values():
                        stability_project(bq)
                step += 1
                value = float(L.data)
                result.losses.append(value)
                epoch_losses.append(value)
                if csv_fh is not None:
                    _write_loss_row(csv_fh, step, value)
                if on_step is not None:
                    on_step(step, value, model)
            if not epoch_losses:
                break
            result.epoch_losses.append(float(np.mean(epoch_losses)))
            result.checkpoint = model_checkpoint(model, state, config, step)
            if out is not None:
                save_checkpoint(out / CHECKPOINT_NAME, result.checkpoint)
            logger.info("epoch %d step %d mean loss %.6g", epoch + 1, step, result.epoch_losses[-1])
            if config.target_loss is not None and result.epoch_losses[-1] < config.target_loss:
                break
    finally:
        if csv_fh is not None:
            csv_fh.close()
    result.seconds = time.perf_counter() - t0
    return result
