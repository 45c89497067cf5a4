"""Clamped linear remixing of the hematoxylin / DAB concentration planes.

The remix computes, per pixel,

    h' = clamp(alpha_hh * h + alpha_dh * d, 0, 1)
    d' = clamp(alpha_hd * h + alpha_dd * d, 0, 1)

on normalized concentrations, so a given coefficient set means the same
physical restaining on every image. The preset grid crosses
alpha_dh in {0, 0.25, 1} with alpha_hh in {0.25, 1} while zeroing the
membrane-channel outputs, producing six nuclear-marker variants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .deconv import ConcentrationImage

ALPHA_KEYS = ("hh", "hd", "dh", "dd")


@dataclass(frozen=True)
class AlphaParams:
    """The four mixing coefficients. Negative values are legal; presets use [0, 1]."""

    alpha_hh: float = 1.0
    alpha_hd: float = 0.0
    alpha_dh: float = 0.0
    alpha_dd: float = 1.0

    def __post_init__(self):
        for key in ALPHA_KEYS:
            value = getattr(self, f"alpha_{key}")
            if not math.isfinite(value):
                raise ValueError(f"alpha_{key} must be finite, got {value!r}")

    def to_dict(self) -> dict:
        return {key: getattr(self, f"alpha_{key}") for key in ALPHA_KEYS}

    @classmethod
    def from_dict(cls, doc: dict) -> "AlphaParams":
        extra = set(doc) - set(ALPHA_KEYS)
        if extra:
            raise ValueError(f"unknown alpha keys: {sorted(extra)}")
        return cls(**{f"alpha_{key}": float(doc[key]) for key in doc})

    @classmethod
    def from_json(cls, text: str) -> "AlphaParams":
        return cls.from_dict(json.loads(text))


IDENTITY = AlphaParams()


def apply_kappa(conc: ConcentrationImage, a: AlphaParams) -> ConcentrationImage:
    """Remix the H and D planes with the given coefficients, clamped to [0, 1].

    Identity coefficients reproduce the input bit-exactly: multiplying by
    1.0 and adding +0.0 are exact in IEEE arithmetic and the clamp is a
    no-op on in-range planes.
    """
    h, d = conc.h_plane, conc.d_plane
    h_out = np.clip(a.alpha_hh * h + a.alpha_dh * d, 0.0, 1.0)
    d_out = np.clip(a.alpha_hd * h + a.alpha_dd * d, 0.0, 1.0)
    return ConcentrationImage(h_out, d_out, conc.c_ref, conc.microns_per_pixel)


def paper_presets() -> list[tuple[str, AlphaParams]]:
    """The six nuclear-marker presets: alpha_dh x alpha_hh grid, off-terms zero."""
    presets = []
    for dh in (0.0, 0.25, 1.0):
        for hh in (0.25, 1.0):
            name = f"hh{hh:.2f}_dh{dh:.2f}"
            presets.append((name, AlphaParams(alpha_hh=hh, alpha_dh=dh)))
    return presets


def preset_by_name(name: str) -> AlphaParams:
    for preset_name, alpha in paper_presets():
        if preset_name == name:
            return alpha
    valid = ", ".join(n for n, _ in paper_presets())
    raise KeyError(f"unknown preset {name!r}; valid presets: {valid}")
