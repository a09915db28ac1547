"""Training targets: face position maps, binary masks and external depth maps."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import kernels, netpbm
from .tensor import resize_bilinear

TargetKind = Literal["position_map", "binary_mask", "depth_map"]
TARGET_KINDS = ("position_map", "binary_mask", "depth_map")
LABELS = ("live", "spoof")


class LandmarkError(ValueError):
    pass


@dataclass
class LandmarkSet:
    """Normalised (x, y) points; ``contour`` picks the closed outer ring (all points if None)."""

    points: list[tuple[float, float]]
    contour: list[int] | None = None
    scheme: str = "ring"

    def ring(self) -> np.ndarray:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.contour is not None:
            pts = pts[list(self.contour)]
        return pts

    def validate(self) -> np.ndarray:
        ring = self.ring()
        if len(ring) < 3:
            raise LandmarkError(f"face contour needs at least 3 points, got {len(ring)}")
        if not np.isfinite(ring).all() or ring.min() < 0 or ring.max() > 1:
            raise LandmarkError("landmark coordinates must lie in [0, 1]")
        return ring


@dataclass
class TargetMap:
    values: np.ndarray  # [Hm,Wm] in [0,1]
    kind: TargetKind


def _check_label(label: str) -> None:
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}, got {label!r}")


def _size(size) -> tuple[int, int]:
    h, w = (size, size) if np.isscalar(size) else size
    return int(h), int(w)


def rasterize_position_map(landmarks: LandmarkSet | Sequence, label: str, size=(32, 32)) -> TargetMap:
    """Pixels whose centres fall inside the contour (even-odd, edges inclusive)
    are 1 for a live face; a spoof map is all zero."""
    _check_label(label)
    h, w = _size(size)
    if h < 4 or w < 4:
        raise ValueError(f"target size must be at least 4x4, got {h}x{w}")
    if not isinstance(landmarks, LandmarkSet):
        landmarks = LandmarkSet([tuple(p) for p in landmarks])
    ring = landmarks.validate()
    if label == "spoof":
        return TargetMap(np.zeros((h, w)), "position_map")
    poly = ring * np.array([w, h], dtype=np.float64)
    return TargetMap(kernels.rasterize(poly, h, w).astype(np.float64), "position_map")


def make_binary_mask(label: str, size=(32, 32)) -> TargetMap:
    _check_label(label)
    h, w = _size(size)
    return TargetMap(np.full((h, w), 1.0 if label == "live" else 0.0), "binary_mask")


def load_depth_map(path: str | os.PathLike, size=(32, 32)) -> TargetMap:
    """Read an 8-bit grayscale PGM, scale to [0,1], bilinear-resize to ``size``."""
    img = netpbm.read_pnm(path)
    if img.ndim != 2:
        raise netpbm.NetpbmError(f"{path}: depth map must be grayscale (P5)")
    h, w = _size(size)
    vals = img.astype(np.float64) / 255.0
    if vals.shape != (h, w):
        vals = resize_bilinear(vals, h, w)
    return TargetMap(np.clip(vals, 0.0, 1.0), "depth_map")


def make_target(kind: str, label: str, size, landmarks=None, depth_path=None) -> TargetMap:
    if kind == "position_map":
        if landmarks is None:
            if label == "spoof":
                return TargetMap(np.zeros(_size(size)), "position_map")
            raise LandmarkError("position_map target for a live sample needs landmarks")
        return rasterize_position_map(landmarks, label, size)
    if kind == "binary_mask":
        return make_binary_mask(label, size)
    if kind == "depth_map":
        if depth_path is None or not os.path.exists(depth_path):
            if label == "spoof":
                return TargetMap(np.zeros(_size(size)), "depth_map")
            raise FileNotFoundError(f"depth map not found: {depth_path}")
        return load_depth_map(depth_path, size)
    raise ValueError(f"unknown target kind {kind!r}; expected one of {TARGET_KINDS}")
