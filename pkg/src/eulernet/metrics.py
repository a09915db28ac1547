"""Presentation-attack error rates, dev-set threshold selection and reports.

Live is the positive class: a sample is accepted as live when its score is
at or above the threshold.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

LIVE_LABELS = ("live",)
ATTACK_LABELS = ("attack", "spoof")
THRESHOLD_POLICY = "min_dev_acer; candidates = midpoints of sorted distinct scores plus {0, 1}; ties -> smallest"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int  # live accepted
    fn: int  # live rejected
    tn: int  # attack rejected
    fp: int  # attack accepted

    def __post_init__(self):
        if min(self.tp, self.fn, self.tn, self.fp) < 0:
            raise ValueError(f"counts must be non-negative: {self}")

    @property
    def n_live(self) -> int:
        return self.tp + self.fn

    @property
    def n_attack(self) -> int:
        return self.tn + self.fp


def _is_live(label: str) -> bool:
    if label in LIVE_LABELS:
        return True
    if label in ATTACK_LABELS:
        return False
    raise ValueError(f"unknown label {label!r}; expected live, attack or spoof")


def _split(scores: Iterable[tuple[float, str]]) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(scores)
    if not pairs:
        raise ValueError("no scores given")
    s = np.array([float(p[0]) for p in pairs])
    live = np.array([_is_live(p[1]) for p in pairs], dtype=bool)
    return s, live


def confusion(scores: Iterable[tuple[float, str]], threshold: float) -> ConfusionCounts:
    s, live = _split(scores)
    accept = s >= threshold
    return ConfusionCounts(
        tp=int(np.sum(accept & live)),
        fn=int(np.sum(~accept & live)),
        tn=int(np.sum(~accept & ~live)),
        fp=int(np.sum(accept & ~live)),
    )


def rates(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(APCER, BPCER, ACER)."""
    if counts.n_attack == 0:
        raise ValueError("APCER undefined: no attack samples (tn + fp == 0)")
    if counts.n_live == 0:
        raise ValueError("BPCER undefined: no live samples (tp + fn == 0)")
    apcer = counts.fp / (counts.tn + counts.fp)
    bpcer = counts.fn / (counts.tp + counts.fn)
    return apcer, bpcer, (apcer + bpcer) / 2


def threshold_candidates(scores: np.ndarray) -> np.ndarray:
    u = np.unique(scores)
    return np.unique(np.concatenate([[0.0, 1.0], (u[:-1] + u[1:]) / 2]))


def select_threshold(dev_scores: Iterable[tuple[float, str]]) -> float:
    """Candidate threshold with the lowest dev ACER; the smallest one on ties."""
    s, live = _split(dev_scores)
    if live.all() or not live.any():
        raise ValueError("threshold selection needs both live and attack samples")
    cands = threshold_candidates(s)
    # vectorised tally over all candidates at once
    accept = s[None, :] >= cands[:, None]
    apcer = (accept & ~live).sum(axis=1) / (~live).sum()
    bpcer = (~accept & live).sum(axis=1) / live.sum()
    acer = (apcer + bpcer) / 2
    return float(cands[int(np.argmin(acer))])


@dataclass
class EvalReport:
    threshold: float
    apcer: float
    bpcer: float
    acer: float
    per_video: list[tuple[str, float, str, str]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def build(cls, videos: Iterable[tuple[str, float, str]], threshold: float, **metadata) -> "EvalReport":
        """``videos`` holds (video_id, score, label) triples; ``threshold`` is applied verbatim."""
        videos = list(videos)
        counts = confusion([(s, lab) for _, s, lab in videos], threshold)
        apcer, bpcer, acer = rates(counts)
        per_video = [(vid, float(s), lab, "live" if s >= threshold else "attack") for vid, s, lab in videos]
        meta = {"threshold_policy": THRESHOLD_POLICY}
        meta.update(metadata)
        return cls(float(threshold), apcer, bpcer, acer, per_video, meta)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "apcer": self.apcer,
            "bpcer": self.bpcer,
            "acer": self.acer,
            "per_video": [
                {"video_id": v, "score": s, "label": lab, "decision": d} for v, s, lab, d in self.per_video
            ],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def save_json(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    def save_csv(self, path: str | os.PathLike) -> None:
        write_scores_csv(path, self.per_video)


def write_scores_csv(path, rows) -> None:
    """rows: (video_id, score, label[, decision])."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "score", "label", "decision"])
        for row in rows:
            vid, score, label = row[:3]
            decision = row[3] if len(row) > 3 else ""
            w.writerow([vid, repr(float(score)), label, decision])


def read_scores_csv(path) -> list[tuple[str, float, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"video_id", "score", "label"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing CSV columns {sorted(missing)}")
        return [(r["video_id"], float(r["score"]), r["label"]) for r in reader]
