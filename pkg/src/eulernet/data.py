"""Manifests, frame I/O, the strided sequence sampler and a synthetic clip generator."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import netpbm
from .supervision import rasterize_position_map
from .tensor import get_default_dtype, resize_bilinear

FRAME_PATTERN = "frame_{:06d}.ppm"
SPLITS = ("train", "dev", "test")


class ClipTooShortError(ValueError):
    """Not enough frames for a single sequence."""


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    length: int = 4
    interval: int = 3

    def __post_init__(self):
        if self.length < 1 or self.interval < 1:
            raise ValueError("sequence length and interval must be >= 1")

    @property
    def span(self) -> int:
        return (self.length - 1) * self.interval + 1


def sample_sequences(n_frames: int, config: SamplerConfig = SamplerConfig(), mode: str = "eval_nonoverlap",
                     rng: np.random.Generator | None = None, count: int = 1) -> list[tuple[int, ...]]:
    """Frame-index tuples (s, s+interval, ...).

    ``eval_nonoverlap`` packs disjoint spans greedily from frame 0 and returns
    [] for a video shorter than one span. ``train_random`` draws ``count``
    uniform starts and raises :class:`ClipTooShortError` when none fits.
    """
    if n_frames < 0:
        raise ValueError("n_frames must be non-negative")
    span = config.span
    if mode == "eval_nonoverlap":
        return [tuple(range(s, s + span, config.interval)) for s in range(0, n_frames - span + 1, span)]
    if mode == "train_random":
        if n_frames < span:
            raise ClipTooShortError(f"{n_frames} frames, need at least {span}")
        rng = rng if rng is not None else np.random.default_rng()
        starts = rng.integers(0, n_frames - span + 1, size=count)
        return [tuple(range(int(s), int(s) + span, config.interval)) for s in starts]
    raise ValueError(f"unknown sampler mode {mode!r}")


@dataclass
class ManifestRecord:
    video_id: str
    frames_dir: str
    label: str
    split: str = "train"
    landmarks: list[list[float]] | None = None
    target_kind: str = "position_map"
    depth_dir: str | None = None

    def validate(self) -> None:
        if self.label not in ("live", "spoof"):
            raise ManifestError(f"{self.video_id}: label must be live|spoof, got {self.label!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"{self.video_id}: split must be one of {SPLITS}, got {self.split!r}")
        if self.target_kind not in ("position_map", "binary_mask", "depth_map"):
            raise ManifestError(f"{self.video_id}: unknown target_kind {self.target_kind!r}")
        if self.target_kind == "position_map" and self.label == "live" and not self.landmarks:
            raise ManifestError(f"{self.video_id}: live position_map record needs landmarks")

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestRecord":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ManifestError(f"unknown manifest fields {sorted(extra)}")
        try:
            rec = cls(**d)
        except TypeError as exc:
            raise ManifestError(str(exc)) from None
        rec.validate()
        return rec


def load_manifest(path: str | os.PathLike) -> list[ManifestRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            try:
                records.append(ManifestRecord.from_dict(d))
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
    return records


def save_manifest(records, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def resolve(manifest_path: str | os.PathLike, p: str | None) -> Path | None:
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def count_frames(frames_dir: str | os.PathLike) -> int:
    """Length of the contiguous frame_000000.ppm, frame_000001.ppm, ... run."""
    n = 0
    while os.path.exists(os.path.join(frames_dir, FRAME_PATTERN.format(n))):
        n += 1
    return n


def frame_to_input(rgb: np.ndarray, size: int = 256) -> np.ndarray:
    """uint8 [H,W,3] -> float [3,size,size]: centre-crop to square, bilinear resize, scale to [0,1]."""
    h, w, _ = rgb.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    img = rgb[top:top + side, left:left + side].transpose(2, 0, 1).astype(np.float64) / 255.0
    if side != size:
        img = resize_bilinear(img, size, size)
    return img.astype(get_default_dtype())


def load_frames(frames_dir: str | os.PathLike, indices, size: int = 256) -> np.ndarray:
    out = []
    for i in indices:
        path = os.path.join(frames_dir, FRAME_PATTERN.format(i))
        rgb = netpbm.read_pnm(path)
        if rgb.ndim != 3:
            raise netpbm.NetpbmError(f"{path}: expected a colour P6 frame")
        out.append(frame_to_input(rgb, size))
    return np.stack(out)


def load_video(frames_dir: str | os.PathLike, size: int = 256) -> np.ndarray:
    n = count_frames(frames_dir)
    if n == 0:
        raise FileNotFoundError(f"no frames ({FRAME_PATTERN.format(0)}) in {frames_dir}")
    return load_frames(frames_dir, range(n), size)


# ---------------------------------------------------------------- synthetic clips


def _ellipse_alpha(size: int, cx: float, cy: float, ax: float, ay: float) -> np.ndarray:
    # one-pixel soft edge so sub-pixel motion shows up in the raster
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    r = np.sqrt(((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2)
    edge = (r - 1.0) * min(ax, ay)
    return np.clip(0.5 - edge, 0.0, 1.0)


DRIFT_PX = 0.5


def _ring(size, cx, cy, ax, ay, n):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    ring = np.stack([(cx + ax * np.cos(ang)) / size, (cy + ay * np.sin(ang)) / size], axis=1)
    return np.round(np.clip(ring, 0.0, 1.0), 6)


def _drift_invariant(ring, size):
    # the label map must not depend on where the face sits within its drift
    grid = max(size // 8, 4)
    base = rasterize_position_map(ring, "live", grid).values
    for dx in np.linspace(-DRIFT_PX, DRIFT_PX, 5) / size:
        shifted = np.clip(ring + [dx, 0.0], 0.0, 1.0)
        if not np.array_equal(rasterize_position_map(shifted, "live", grid).values, base):
            return False
    return True


def synth_dataset(seed: int, n_live: int, n_spoof: int, out_dir: str | os.PathLike, n_frames: int = 20,
                  size: int = 256, fps: float = 30.0, split: str = "train",
                  target_kind: str = "position_map", n_landmarks: int = 32) -> Path:
    """Write ellipse "faces" as PPM frames plus a JSONL manifest; return its path.

    live   : ellipse with sub-pixel sinusoidal drift and 0.8-2 Hz brightness flicker;
             the ellipse is resampled until its label map is the same anywhere in the drift
    print  : one frozen frame, contrast squeezed into a paper-like gamut
    replay : live-like motion plus a moire grating and per-frame pixel noise
    Spoof clips alternate print, replay, print, ...
    """
    if n_live < 1 or n_spoof < 1:
        raise ValueError("n_live and n_spoof must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    background = np.stack([0.18 + 0.10 * yy, 0.22 + 0.08 * yy, 0.28 + 0.05 * xx])
    skin = np.array([0.85, 0.64, 0.54])[:, None, None]
    t = np.arange(n_frames) / fps

    records = []
    kinds = ["live"] * n_live + ["print" if i % 2 == 0 else "replay" for i in range(n_spoof)]
    counters = {"live": 0, "spoof": 0}
    for kind in kinds:
        label = "live" if kind == "live" else "spoof"
        vid = f"{label}_{counters[label]:03d}"
        counters[label] += 1
        for _ in range(10_000):
            cx, cy = size * (0.5 + rng.uniform(-0.06, 0.06, 2))
            ax, ay = size * rng.uniform(0.22, 0.30), size * rng.uniform(0.28, 0.36)
            ring = _ring(size, cx, cy, ax, ay, n_landmarks)
            if kind != "live" or _drift_invariant(ring, size):
                break
        else:
            raise RuntimeError("could not place a drift-invariant face")
        f_move, f_flick = rng.uniform(0.8, 2.0, 2)
        ph_move, ph_flick = rng.uniform(0, 2 * np.pi, 2)
        drift = DRIFT_PX * np.sin(2 * np.pi * f_move * t + ph_move)
        flicker = 1.0 + 0.04 * np.sin(2 * np.pi * f_flick * t + ph_flick)
        grating_f = rng.uniform(0.18, 0.3) * size
        grating_th = rng.uniform(0, np.pi)
        grating = 0.06 * np.sin(2 * np.pi * grating_f * (xx * np.cos(grating_th) + yy * np.sin(grating_th)))

        vdir = out / vid
        vdir.mkdir(exist_ok=True)
        for k in range(n_frames):
            if kind == "print":
                a = _ellipse_alpha(size, cx, cy, ax, ay)
                img = background * (1 - a) + skin * a
                img = 0.28 + 0.55 * img
            else:
                a = _ellipse_alpha(size, cx + drift[k], cy, ax, ay)
                img = background * (1 - a) + skin * flicker[k] * a
                if kind == "replay":
                    img = img + grating + rng.normal(0, 0.03, img.shape)
            netpbm.write_ppm(vdir / FRAME_PATTERN.format(k), netpbm.to_uint8(img.transpose(1, 2, 0)))

        records.append(ManifestRecord(vid, vid, label, split, [[float(x), float(y)] for x, y in ring],
                                      target_kind))
    manifest = out / "manifest.jsonl"
    save_manifest(records, manifest)
    return manifest
