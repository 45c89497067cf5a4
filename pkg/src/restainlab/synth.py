"""Synthetic membrane-marker FOVs with known nucleus centers.

Each FOV places non-overlapping disk nuclei carrying hematoxylin and an
annular membrane ring around each carrying DAB, rasterized with a 1 px
linear edge ramp, composed into OD via the fixed HD basis, and quantized
to RGB. Every nucleus draws from its own RNG stream keyed on
(seed, 0, index) and the additive noise from (seed, 1), so outputs are a
pure function of the config regardless of evaluation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .colorspace import OD_MAX, OdImage, RgbImage, od_to_rgb
from .deconv import DEFAULT_C_REF, fixed_hd_matrix
from .errors import InvalidConfigError

MAX_PLACEMENT_ATTEMPTS = 1000
OVERLAP_MARGIN = 1.2  # min center distance as a multiple of r_i + r_j


@dataclass(frozen=True)
class SynthConfig:
    width: int = 256
    height: int = 256
    microns_per_pixel: float = 0.5
    n_nuclei: int = 20
    nucleus_radius_um: tuple[float, float] = (1.0, 1.25)
    membrane_thickness_um: float = 1.0
    h_concentration: tuple[float, float] = (0.2, 0.8)
    d_concentration: tuple[float, float] = (0.8, 1.4)
    background_od: float = 0.02
    noise_sigma: float = 0.01
    seed: int = 0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidConfigError("width and height must be >= 1")
        if not self.microns_per_pixel > 0:
            raise InvalidConfigError("microns_per_pixel must be > 0")
        if self.n_nuclei < 0:
            raise InvalidConfigError("n_nuclei must be >= 0")
        r_lo, r_hi = self.nucleus_radius_um
        if not (0 < r_lo <= r_hi):
            raise InvalidConfigError("nucleus_radius_um must satisfy 0 < min <= max")
        if self.membrane_thickness_um < 0:
            raise InvalidConfigError("membrane_thickness_um must be >= 0")
        for name in ("h_concentration", "d_concentration"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi <= DEFAULT_C_REF):
                raise InvalidConfigError(
                    f"{name} must satisfy 0 <= min <= max <= {DEFAULT_C_REF}"
                )
        if self.background_od < 0:
            raise InvalidConfigError("background_od must be >= 0")
        if self.noise_sigma < 0:
            raise InvalidConfigError("noise_sigma must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise InvalidConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("nucleus_radius_um", "h_concentration", "d_concentration"):
            doc[key] = list(doc[key])
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise InvalidConfigError(f"unknown synth config keys: {sorted(extra)}")
        kwargs = dict(doc)
        for key in ("nucleus_radius_um", "h_concentration", "d_concentration"):
            if key in kwargs:
                pair = kwargs[key]
                if len(pair) != 2:
                    raise InvalidConfigError(f"{key} must be a [min, max] pair")
                kwargs[key] = (float(pair[0]), float(pair[1]))
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass
class GroundTruth:
    """Placed nucleus centers (x, y) in pixel coordinates, sub-pixel precision."""

    centers: list[tuple[float, float]] = field(default_factory=list)
    radii_px: list[float] = field(default_factory=list)


def derive_fov_seed(base_seed: int, index: int) -> int:
    """Stable per-FOV seed so batch runs are reproducible FOV by FOV."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, np.uint64)[0])


def _place_nuclei(cfg: SynthConfig) -> list[tuple[float, float, float, float, float]]:
    """Rejection-sample (cx, cy, r_px, h_conc, d_conc) per nucleus."""
    mem_px = cfg.membrane_thickness_um / cfg.microns_per_pixel
    placed: list[tuple[float, float, float, float, float]] = []
    for i in range(cfg.n_nuclei):
        rng = np.random.default_rng([cfg.seed, 0, i])
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            r_um = rng.uniform(*cfg.nucleus_radius_um)
            r_px = r_um / cfg.microns_per_pixel
            inset = r_px + mem_px + 2.0
            if cfg.width - 1 - inset <= inset or cfg.height - 1 - inset <= inset:
                continue
            cx = rng.uniform(inset, cfg.width - 1 - inset)
            cy = rng.uniform(inset, cfg.height - 1 - inset)
            ok = all(
                math.hypot(cx - px, cy - py) >= OVERLAP_MARGIN * (r_px + pr)
                for px, py, pr, _, _ in placed
            )
            if ok:
                h_c = rng.uniform(*cfg.h_concentration)
                d_c = rng.uniform(*cfg.d_concentration)
                placed.append((cx, cy, r_px, h_c, d_c))
                break
    return placed


def synthesize_fov(cfg: SynthConfig) -> tuple[RgbImage, GroundTruth]:
    """Render one FOV and its ground-truth centers.

    Placement exhausts at most 1000 attempts per nucleus; fewer nuclei than
    requested may be placed, and only placed nuclei appear in the returned
    GroundTruth.
    """
    cfg.validate()
    mem_px = cfg.membrane_thickness_um / cfg.microns_per_pixel
    placed = _place_nuclei(cfg)

    h_field = np.zeros((cfg.height, cfg.width), dtype=np.float64)
    d_field = np.zeros((cfg.height, cfg.width), dtype=np.float64)
    for cx, cy, r_px, h_c, d_c in placed:
        reach = r_px + mem_px + 1.0
        x0 = max(0, int(math.floor(cx - reach)))
        x1 = min(cfg.width, int(math.ceil(cx + reach)) + 1)
        y0 = max(0, int(math.floor(cy - reach)))
        y1 = min(cfg.height, int(math.ceil(cy + reach)) + 1)
        ys = np.arange(y0, y1, dtype=np.float64)[:, None]
        xs = np.arange(x0, x1, dtype=np.float64)[None, :]
        dist = np.hypot(xs - cx, ys - cy)
        disk = np.clip(r_px + 0.5 - dist, 0.0, 1.0)
        h_field[y0:y1, x0:x1] += h_c * disk
        if mem_px > 0:
            ring = np.clip(dist - (r_px - 0.5), 0.0, 1.0) * np.clip(
                r_px + mem_px + 0.5 - dist, 0.0, 1.0
            )
            d_field[y0:y1, x0:x1] += d_c * ring

    basis = fixed_hd_matrix().hd_subset().vectors
    od = h_field[:, :, None] * basis[0] + d_field[:, :, None] * basis[1]
    if cfg.background_od > 0:
        od += cfg.background_od
    if cfg.noise_sigma > 0:
        noise_rng = np.random.default_rng([cfg.seed, 1])
        od += noise_rng.normal(0.0, cfg.noise_sigma, size=od.shape)
    image = od_to_rgb(OdImage(np.clip(od, 0.0, OD_MAX)), cfg.microns_per_pixel)

    gt = GroundTruth(
        centers=[(cx, cy) for cx, cy, *_ in placed],
        radii_px=[r_px for _, _, r_px, _, _ in placed],
    )
    return image, gt


def fov_config(cfg: SynthConfig, index: int) -> SynthConfig:
    """The per-FOV config used by batch synthesis: same fields, derived seed."""
    return replace(cfg, seed=derive_fov_seed(cfg.seed, index))


def save_centers_csv(centers, path: str | Path) -> None:
    """Ground-truth CSV: header x,y; one row per center, 3 decimals."""
    lines = ["x,y"]
    for x, y in centers:
        lines.append(f"{x:.3f},{y:.3f}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_synth_config(path: str | Path) -> SynthConfig:
    return SynthConfig.from_dict(json.loads(Path(path).read_text()))
