"""Codec-composed restaining and batch in-silico dataset generation.

A codec pairs an encode (RGB -> concentration planes) with the matching
decode; restaining composes decode after channel remixing after encode.
The codec is injected rather than hardwired so alternative stain
separators (including learned ones) can drop in behind the same surface.
"""

from __future__ import annotations

import datetime
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from math import ceil
from pathlib import Path

import numpy as np

from .colorspace import RgbImage, load_png, od_to_rgb, rgb_to_od, save_png
from .deconv import (
    DEFAULT_C_REF,
    ConcentrationImage,
    StainMatrix,
    deconvolve_inverse,
    deconvolve_nnls,
    fixed_hd_matrix,
    reconstruct,
)
from .errors import InvalidConfigError
from .restain import AlphaParams, apply_kappa

CODEC_KINDS = ("fixed-inverse", "fixed-nnls", "ksvd-nnls")


@dataclass(frozen=True)
class HdCodec:
    """Stain codec: encode RGB to HD concentrations and decode back.

    kind selects the encode route: exact 3x3 inversion ("fixed-inverse",
    3-vector basis) or per-pixel NNLS ("fixed-nnls" / "ksvd-nnls", 2-vector
    basis; the latter conventionally carries a blindly estimated basis).
    Decode always recomposes from the HEX and DAB rows.
    """

    kind: str
    stains: StainMatrix
    c_ref: float = DEFAULT_C_REF

    def __post_init__(self):
        if self.kind not in CODEC_KINDS:
            raise InvalidConfigError(f"unknown codec kind {self.kind!r}; expected one of {CODEC_KINDS}")
        if self.kind == "fixed-inverse" and self.stains.n_stains != 3:
            raise InvalidConfigError("fixed-inverse codec requires a 3-vector stain matrix")
        if self.kind != "fixed-inverse" and self.stains.n_stains != 2:
            raise InvalidConfigError(f"{self.kind} codec requires a 2-vector stain matrix")
        if not self.c_ref > 0:
            raise InvalidConfigError("c_ref must be > 0")

    def encode(self, img: RgbImage) -> ConcentrationImage:
        od = rgb_to_od(img)
        if self.kind == "fixed-inverse":
            return deconvolve_inverse(od, self.stains, self.c_ref, img.microns_per_pixel)
        return deconvolve_nnls(od, self.stains, self.c_ref, img.microns_per_pixel)

    def decode(self, conc: ConcentrationImage) -> RgbImage:
        od = reconstruct(conc, self.stains.hd_subset())
        return od_to_rgb(od, conc.microns_per_pixel)

    def spec_dict(self) -> dict:
        return {
            "kind": self.kind,
            "stains": {"labels": list(self.stains.labels), "vectors": self.stains.vectors.tolist()},
            "c_ref": self.c_ref,
        }


def make_codec(kind: str = "fixed-inverse", stains: StainMatrix | None = None,
               c_ref: float = DEFAULT_C_REF) -> HdCodec:
    """Build a codec, defaulting the stain basis to the fixed HD reference."""
    if stains is None:
        if kind == "ksvd-nnls":
            raise InvalidConfigError(
                "ksvd-nnls codec needs an estimated stain matrix; run stain "
                "estimation first or pass stains explicitly"
            )
        stains = fixed_hd_matrix()
    if kind in ("fixed-nnls", "ksvd-nnls") and stains.n_stains == 3:
        stains = stains.hd_subset()
    return HdCodec(kind, stains, c_ref)


def restain_image(img: RgbImage, codec: HdCodec, a: AlphaParams) -> RgbImage:
    """Eq-style composition: decode(remix(encode(img))), geometry preserved."""
    return codec.decode(apply_kappa(codec.encode(img), a))


@dataclass
class ManifestEntry:
    source_path: str
    preset_name: str
    output_path: str
    codec: dict
    alpha: dict
    microns_per_pixel: float


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)
    generated_at: str = ""

    def to_dict(self) -> dict:
        return {
            "generated_at": self.generated_at,
            "counts": self.counts,
            "entries": [vars(e) for e in self.entries],
            "errors": self.errors,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _process_one_input(path_str: str, codec: HdCodec, presets, out_dir: str,
                       microns_per_pixel: float):
    """Restain one source image with every preset. Returns (entries, error)."""
    src = Path(path_str)
    try:
        img = load_png(src, microns_per_pixel)
    except (OSError, ValueError) as exc:
        return [], {"path": str(src), "error": str(exc)}
    entries = []
    try:
        conc = codec.encode(img)
        for preset_name, alpha in presets:
            out_path = Path(out_dir) / f"{src.stem}__{preset_name}.png"
            save_png(codec.decode(apply_kappa(conc, alpha)), out_path)
            entries.append(
                ManifestEntry(
                    source_path=str(src),
                    preset_name=preset_name,
                    output_path=str(out_path),
                    codec=codec.spec_dict(),
                    alpha=alpha.to_dict(),
                    microns_per_pixel=microns_per_pixel,
                )
            )
    except OSError as exc:
        return [], {"path": str(src), "error": str(exc)}
    return entries, None


def generate_dataset(
    inputs,
    codec: HdCodec,
    presets,
    out_dir: str | Path,
    microns_per_pixel: float = 0.5,
    jobs: int = 1,
) -> DatasetManifest:
    """Write |inputs| x |presets| restained PNGs plus manifest.json.

    Output files are named <stem>__<preset>.png. Inputs that cannot be read
    or written are collected into the manifest's error list and skipped;
    the remaining inputs are still processed. Output bytes are
    deterministic for identical inputs and configuration, independent of
    the worker count.
    """
    inputs = [str(p) for p in inputs]
    presets = list(presets)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = DatasetManifest()
    seen_stems: dict[str, str] = {}
    todo = []
    for p in inputs:
        stem = Path(p).stem
        if stem in seen_stems:
            manifest.errors.append(
                {"path": p, "error": f"duplicate stem {stem!r} (already used by {seen_stems[stem]})"}
            )
            continue
        seen_stems[stem] = p
        todo.append(p)

    worker = partial(
        _process_one_input,
        codec=codec,
        presets=presets,
        out_dir=str(out_dir),
        microns_per_pixel=microns_per_pixel,
    )
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, todo))
    else:
        results = [worker(p) for p in todo]

    ok_inputs = 0
    for entries, error in results:
        if error is not None:
            manifest.errors.append(error)
        else:
            ok_inputs += 1
            manifest.entries.extend(entries)
    manifest.counts = {
        "inputs": ok_inputs,
        "presets": len(presets),
        "outputs": len(manifest.entries),
    }
    manifest.generated_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest.save(out_dir / "manifest.json")
    return manifest


GALLERY_WRAP = 4
GALLERY_GAP_PX = 2


def render_preset_gallery(img: RgbImage, codec: HdCodec, presets) -> RgbImage:
    """Tile the source and each restained variant into one inspection image.

    Tiles run left-to-right, wrapping after four, with 2 px black
    separators; tile (0, 0) is always the unmodified source.
    """
    presets = list(presets)
    if not presets:
        raise ValueError("at least one preset is required")
    conc = codec.encode(img)
    tiles = [img.pixels]
    tiles += [codec.decode(apply_kappa(conc, alpha)).pixels for _, alpha in presets]

    n = len(tiles)
    cols = min(GALLERY_WRAP, n)
    rows = ceil(n / GALLERY_WRAP)
    h, w = img.pixels.shape[:2]
    canvas = np.zeros(
        (rows * h + (rows - 1) * GALLERY_GAP_PX, cols * w + (cols - 1) * GALLERY_GAP_PX, 3),
        dtype=np.uint8,
    )
    for idx, tile in enumerate(tiles):
        r, c = divmod(idx, GALLERY_WRAP)
        y0 = r * (h + GALLERY_GAP_PX)
        x0 = c * (w + GALLERY_GAP_PX)
        canvas[y0 : y0 + h, x0 : x0 + w] = tile
    return RgbImage(canvas, img.microns_per_pixel)
