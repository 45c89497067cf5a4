"""Nucleus center detection on the hematoxylin concentration plane.

A fixed classical detector: Gaussian smoothing, strict 8-neighborhood
local maxima above a threshold, then greedy distance suppression. Rules
(kernel radius, border handling, tie-breaks) are pinned so results are
reproducible across runs and worker counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .deconv import ConcentrationImage
from .errors import InvalidConfigError


@dataclass(frozen=True)
class DetectorConfig:
    sigma_px: float = 2.0
    threshold: float = 0.1
    min_distance_px: float = 5.0

    def validate(self) -> None:
        if not self.sigma_px > 0:
            raise InvalidConfigError("sigma_px must be > 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidConfigError("threshold must lie in [0, 1]")
        if self.min_distance_px < 1:
            raise InvalidConfigError("min_distance_px must be >= 1")

    def to_dict(self) -> dict:
        return {
            "sigma_px": self.sigma_px,
            "threshold": self.threshold,
            "min_distance_px": self.min_distance_px,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DetectorConfig":
        extra = set(doc) - set(cls.__dataclass_fields__)
        if extra:
            raise InvalidConfigError(f"unknown detector config keys: {sorted(extra)}")
        cfg = cls(**{k: float(v) for k, v in doc.items()})
        cfg.validate()
        return cfg


@dataclass
class DetectionList:
    """Detected centers (x, y) in pixels with their peak scores, score-descending."""

    centers: list[tuple[float, float]] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)


def _strict_local_maxima(plane: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels strictly greater than all 8 neighbors.

    Out-of-image neighbors count as -inf, so border pixels can qualify.
    """
    padded = np.pad(plane, 1, constant_values=-np.inf)
    h, w = plane.shape
    mask = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            mask &= plane > padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return mask


def detect_nuclei(conc: ConcentrationImage, cfg: DetectorConfig | None = None) -> DetectionList:
    """Find nucleus center candidates in the smoothed H plane.

    Smoothing uses a truncated Gaussian of radius ceil(3*sigma) with
    reflected borders. Candidate peaks must be strict 8-neighborhood maxima
    with smoothed value >= threshold. Peaks closer than min_distance_px to
    a stronger peak are suppressed greedily, ties broken by row-major
    position; survivors are returned sorted by descending score.
    """
    if cfg is None:
        cfg = DetectorConfig()
    cfg.validate()
    radius = math.ceil(3.0 * cfg.sigma_px)
    smoothed = gaussian_filter(conc.h_plane, cfg.sigma_px, mode="reflect", radius=radius)

    mask = _strict_local_maxima(smoothed) & (smoothed >= cfg.threshold)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return DetectionList()
    scores = smoothed[ys, xs]

    # Descending score, then row-major (y, x) on ties.
    order = np.lexsort((xs, ys, -scores))
    ys, xs, scores = ys[order], xs[order], scores[order]

    kept_x: list[float] = []
    kept_y: list[float] = []
    kept_s: list[float] = []
    for x, y, s in zip(xs, ys, scores):
        suppressed = any(
            math.hypot(x - kx, y - ky) < cfg.min_distance_px
            for kx, ky in zip(kept_x, kept_y)
        )
        if not suppressed:
            kept_x.append(float(x))
            kept_y.append(float(y))
            kept_s.append(float(s))
    return DetectionList(centers=list(zip(kept_x, kept_y)), scores=kept_s)


def save_detections_csv(detections: DetectionList, path: str | Path) -> None:
    """Detection CSV: header x,y,score."""
    lines = ["x,y,score"]
    for (x, y), s in zip(detections.centers, detections.scores):
        lines.append(f"{x:.3f},{y:.3f},{s:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")
