"""Conversion between 8-bit RGB intensity and Beer-Lambert optical density.

Convention: OD = -log10(I / I0) with a fixed white point I0 = 255. Intensity
0 is clamped to 1 before the log so OD stays bounded by log10(255); the
1/255 quantization floor is below visual significance. The inverse rounds
half away from zero so the round trip is bit-exact for every v in [1, 255].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

OD_MAX = math.log10(255.0)


@dataclass
class RgbImage:
    """8-bit RGB raster, shape (height, width, 3), with physical pixel size."""

    pixels: np.ndarray
    microns_per_pixel: float = 0.5

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel array, got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {self.pixels.dtype}")
        if not self.microns_per_pixel > 0:
            raise ValueError("microns_per_pixel must be > 0")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class OdImage:
    """Per-channel optical density planes, shape (height, width, 3)."""

    planes: np.ndarray
    od_max: float = field(default=OD_MAX)

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim != 3 or self.planes.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) OD array, got {self.planes.shape}")
        if not self.od_max > 0:
            raise ValueError("od_max must be > 0")

    @property
    def width(self) -> int:
        return self.planes.shape[1]

    @property
    def height(self) -> int:
        return self.planes.shape[0]


def rgb_to_od(img: RgbImage) -> OdImage:
    """Map intensities to optical density: OD = -log10(max(v, 1) / 255)."""
    v = np.maximum(img.pixels.astype(np.float64), 1.0)
    od = -np.log10(v / 255.0)
    return OdImage(np.clip(od, 0.0, OD_MAX))


def od_to_rgb(od: OdImage, microns_per_pixel: float = 0.5) -> RgbImage:
    """Map optical density back to intensity: v = round(255 * 10**-OD).

    Rounds half away from zero (values are nonnegative, so floor(x + 0.5))
    and clamps to [0, 255].
    """
    v = 255.0 * np.power(10.0, -od.planes)
    pixels = np.clip(np.floor(v + 0.5), 0.0, 255.0).astype(np.uint8)
    return RgbImage(pixels, microns_per_pixel)


def load_png(path: str | Path, microns_per_pixel: float = 0.5) -> RgbImage:
    """Read a PNG as 8-bit RGB. Non-RGB modes are converted."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return RgbImage(np.asarray(rgb, dtype=np.uint8), microns_per_pixel)


def save_png(img: RgbImage, path: str | Path) -> None:
    """Write an 8-bit RGB PNG (no alpha)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")
