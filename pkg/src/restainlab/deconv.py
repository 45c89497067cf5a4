"""Stain separation between OD space and per-stain concentration planes.

Three routes are provided: exact 3x3 matrix inversion against a fixed
reference basis, per-pixel nonnegative least squares against a 2-stain
basis, and a deterministic K-SVD style blind estimator that refines a
2-stain basis from image data.

Concentrations are stored normalized: raw concentration / c_ref, clamped
to [0, 1]. A fixed c_ref (default 2.0) keeps the encode/decode pair a
deterministic bijection on [0, c_ref] so channel remixing has the same
physical meaning on every image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .colorspace import OD_MAX, OdImage
from .errors import CollapsedAtomError, DegenerateDataError, SingularMatrixError

DEFAULT_C_REF = 2.0

# Reference stain absorbance directions (hematoxylin, eosin, DAB), as
# published with the classical color-deconvolution method and used by the
# common library implementations. Rows are normalized on construction.
_HED_ROWS = (
    (0.65, 0.70, 0.29),
    (0.07, 0.99, 0.11),
    (0.27, 0.57, 0.78),
)

_MIN_ANGLE_DEG = 1.0


@dataclass(frozen=True)
class StainMatrix:
    """2 or 3 unit-norm nonnegative stain OD vectors with stain labels."""

    vectors: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "labels", tuple(self.labels))
        if v.ndim != 2 or v.shape[0] not in (2, 3) or v.shape[1] != 3:
            raise ValueError(f"expected (2|3, 3) stain vectors, got {v.shape}")
        if len(self.labels) != v.shape[0]:
            raise ValueError("one label per stain vector required")
        if (v < 0).any():
            raise ValueError("stain vectors must be nonnegative")
        norms = np.linalg.norm(v, axis=1)
        if np.abs(norms - 1.0).max() > 1e-9:
            raise ValueError("stain vectors must have unit L2 norm (tol 1e-9)")
        max_dot = math.cos(math.radians(_MIN_ANGLE_DEG))
        for i in range(v.shape[0]):
            for j in range(i + 1, v.shape[0]):
                if float(v[i] @ v[j]) > max_dot:
                    raise ValueError(
                        f"stain vectors {self.labels[i]!r} and {self.labels[j]!r} "
                        "are closer than 1 degree"
                    )

    @classmethod
    def from_rows(cls, rows, labels) -> "StainMatrix":
        """Build from arbitrary nonnegative rows, normalizing each to unit norm."""
        v = np.asarray(rows, dtype=np.float64)
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        if (norms == 0).any():
            raise ValueError("zero stain vector")
        return cls(v / norms, tuple(labels))

    @property
    def n_stains(self) -> int:
        return self.vectors.shape[0]

    def row(self, label: str) -> np.ndarray:
        return self.vectors[self.labels.index(label)]

    def hd_subset(self) -> "StainMatrix":
        """The (HEX, DAB) 2-vector matrix used for encode/decode work."""
        if self.n_stains == 2:
            return self
        return StainMatrix(
            np.stack([self.row("HEX"), self.row("DAB")]), ("HEX", "DAB")
        )


@dataclass
class ConcentrationImage:
    """Normalized hematoxylin / DAB concentration planes in [0, 1]."""

    h_plane: np.ndarray
    d_plane: np.ndarray
    c_ref: float = DEFAULT_C_REF
    microns_per_pixel: float = 0.5

    def __post_init__(self):
        self.h_plane = np.asarray(self.h_plane, dtype=np.float64)
        self.d_plane = np.asarray(self.d_plane, dtype=np.float64)
        if self.h_plane.ndim != 2 or self.h_plane.shape != self.d_plane.shape:
            raise ValueError("h_plane and d_plane must be equal-shape 2D arrays")
        for name, plane in (("h_plane", self.h_plane), ("d_plane", self.d_plane)):
            if plane.size and (plane.min() < 0.0 or plane.max() > 1.0):
                raise ValueError(f"{name} values must lie in [0, 1]")
        if not self.c_ref > 0:
            raise ValueError("c_ref must be > 0")
        if not self.microns_per_pixel > 0:
            raise ValueError("microns_per_pixel must be > 0")

    @property
    def width(self) -> int:
        return self.h_plane.shape[1]

    @property
    def height(self) -> int:
        return self.h_plane.shape[0]


def fixed_hd_matrix() -> StainMatrix:
    """The classical hematoxylin / eosin / DAB reference basis.

    Rows are the published reference constants, unit-normalized. The eosin
    row doubles as the residual direction; HD work selects the HEX and DAB
    rows via :meth:`StainMatrix.hd_subset`.
    """
    return StainMatrix.from_rows(_HED_ROWS, ("HEX", "RES", "DAB"))


def nnls_two_atoms(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact nonnegative least squares for a two-column system, vectorized.

    Solves min ||y_i - a c_i||_2 s.t. c_i >= 0 for every row y_i. With two
    variables the active-set enumeration is closed form: take the
    unconstrained normal-equation solution when it is feasible, otherwise
    the better of the two single-atom faces (each a clamped 1D projection).
    Ties between faces resolve to the first atom.

    Parameters
    ----------
    a : (3, 2) array
        Columns are the atom directions (need not be unit norm).
    y : (n, 3) array
        One observation per row.

    Returns
    -------
    (n, 2) array of nonnegative coefficients.
    """
    a = np.asarray(a, dtype=np.float64)
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    g11 = float(a[:, 0] @ a[:, 0])
    g22 = float(a[:, 1] @ a[:, 1])
    g12 = float(a[:, 0] @ a[:, 1])
    det = g11 * g22 - g12 * g12
    b1 = y @ a[:, 0]
    b2 = y @ a[:, 1]

    if det > 1e-12 * g11 * g22:
        c1 = (g22 * b1 - g12 * b2) / det
        c2 = (g11 * b2 - g12 * b1) / det
        interior = (c1 >= 0.0) & (c2 >= 0.0)
    else:
        c1 = c2 = np.zeros_like(b1)
        interior = np.zeros(b1.shape, dtype=bool)

    # Face candidates: drop one atom, clamp the remaining 1D projection.
    f1 = np.maximum(b1, 0.0) / g11
    f2 = np.maximum(b2, 0.0) / g22
    face1_wins = f1 * b1 >= f2 * b2  # compares the objective improvements
    out = np.empty((y.shape[0], 2), dtype=np.float64)
    out[:, 0] = np.where(interior, c1, np.where(face1_wins, f1, 0.0))
    out[:, 1] = np.where(interior, c2, np.where(face1_wins, 0.0, f2))
    return out


def _normalize_planes(raw: np.ndarray, c_ref: float) -> np.ndarray:
    return np.clip(raw / c_ref, 0.0, 1.0)


def deconvolve_inverse(
    od: OdImage,
    m: StainMatrix,
    c_ref: float = DEFAULT_C_REF,
    microns_per_pixel: float = 0.5,
) -> ConcentrationImage:
    """Per-pixel exact 3x3 unmix against a 3-stain basis.

    Solves OD = M^T c by matrix inversion, clamps concentrations at 0,
    normalizes by c_ref with a clamp at 1. The HEX and DAB rows populate
    the output planes; the third (residual) concentration is discarded.

    Raises
    ------
    SingularMatrixError
        If the 3x3 system has condition number > 1e8.
    """
    if m.n_stains != 3:
        raise ValueError("deconvolve_inverse requires a 3-vector stain matrix")
    mat = m.vectors
    if np.linalg.cond(mat) > 1e8:
        raise SingularMatrixError("stain system condition number exceeds 1e8")
    inv = np.linalg.inv(mat)
    flat = od.planes.reshape(-1, 3)
    conc = np.maximum(flat @ inv, 0.0)
    shape = od.planes.shape[:2]
    h = conc[:, m.labels.index("HEX")].reshape(shape)
    d = conc[:, m.labels.index("DAB")].reshape(shape)
    return ConcentrationImage(
        _normalize_planes(h, c_ref), _normalize_planes(d, c_ref),
        c_ref, microns_per_pixel,
    )


def deconvolve_nnls(
    od: OdImage,
    m: StainMatrix,
    c_ref: float = DEFAULT_C_REF,
    microns_per_pixel: float = 0.5,
) -> ConcentrationImage:
    """Per-pixel nonnegative least squares against a 2-stain basis."""
    if m.n_stains != 2:
        raise ValueError("deconvolve_nnls requires a 2-vector stain matrix")
    flat = od.planes.reshape(-1, 3)
    conc = nnls_two_atoms(m.vectors.T, flat)
    shape = od.planes.shape[:2]
    h = conc[:, 0].reshape(shape)
    d = conc[:, 1].reshape(shape)
    return ConcentrationImage(
        _normalize_planes(h, c_ref), _normalize_planes(d, c_ref),
        c_ref, microns_per_pixel,
    )


def reconstruct(conc: ConcentrationImage, m: StainMatrix) -> OdImage:
    """Recompose OD from concentration planes: OD = h*c_ref*m_H + d*c_ref*m_D."""
    if m.n_stains != 2:
        raise ValueError("reconstruct requires a 2-vector stain matrix")
    h = conc.h_plane * conc.c_ref
    d = conc.d_plane * conc.c_ref
    od = h[:, :, None] * m.vectors[0] + d[:, :, None] * m.vectors[1]
    return OdImage(np.clip(od, 0.0, OD_MAX))


FOREGROUND_OD_NORM = 0.05


def estimate_stain_matrix(
    od_sample: np.ndarray,
    init: StainMatrix | None = None,
    max_iters: int = 50,
    tol: float = 1e-6,
    objective_log: list | None = None,
) -> StainMatrix:
    """Blind 2-stain basis refinement by alternating NNLS / rank-1 updates.

    Each iteration runs (a) a concentration step, per-pixel NNLS against the
    current basis, then (b) a dictionary step: for each stain in order
    (HEX then DAB), a rank-1 update on the residual with the other stain's
    contribution removed, restricted to the pixels where the stain is
    active. The candidate atom is the dominant left singular vector,
    projected onto the nonnegative orthant and renormalized; its active
    coefficients are refit by the exact per-pixel nonnegative projection.
    The update is kept only when it does not increase the residual on its
    support, which makes the recomputed Frobenius objective non-increasing
    across iterations. Stops when the relative objective decrease falls
    below ``tol``.

    Parameters
    ----------
    od_sample : (n, 3) array
        OD pixels; near-white pixels (||od|| <= 0.05) are discarded first.
    init : StainMatrix, optional
        Two-vector starting basis; defaults to the fixed HD reference rows.
    objective_log : list, optional
        If given, the per-iteration objective ||Y - C M||_F is appended.

    Raises
    ------
    DegenerateDataError
        If fewer than 100 foreground pixels survive the background filter.
    CollapsedAtomError
        If a stain vector's support becomes empty.
    """
    if init is None:
        init = fixed_hd_matrix().hd_subset()
    if init.n_stains != 2:
        raise ValueError("estimate_stain_matrix requires a 2-vector init")
    sample = np.atleast_2d(np.asarray(od_sample, dtype=np.float64))
    if sample.ndim != 2 or sample.shape[1] != 3:
        raise ValueError("od_sample must be an (n, 3) pixel array")
    y = sample[np.linalg.norm(sample, axis=1) > FOREGROUND_OD_NORM]
    if y.shape[0] < 100:
        raise DegenerateDataError(
            f"only {y.shape[0]} foreground pixels (need >= 100)"
        )

    m = init.vectors.copy()
    prev = None
    for _ in range(max_iters):
        c = nnls_two_atoms(m.T, y)
        for k in (0, 1):
            support = c[:, k] > 0.0
            if not support.any():
                raise CollapsedAtomError(init.labels[k])
            other = 1 - k
            resid = y[support] - np.outer(c[support, other], m[other])
            u, _, _ = np.linalg.svd(resid.T, full_matrices=False)
            cand = u[:, 0]
            if float(cand @ m[k]) < 0.0:
                cand = -cand
            cand = np.maximum(cand, 0.0)
            norm = np.linalg.norm(cand)
            if norm < 1e-12:
                continue  # projection annihilated the candidate; keep current
            cand = cand / norm
            coef_new = np.maximum(resid @ cand, 0.0)
            coef_cur = c[support, k]
            # restricted objective, dropping the shared ||resid||^2 term
            f_cur = -2.0 * float(m[k] @ (resid.T @ coef_cur)) + float(coef_cur @ coef_cur)
            f_new = -2.0 * float(cand @ (resid.T @ coef_new)) + float(coef_new @ coef_new)
            if f_new <= f_cur:
                m[k] = cand
                c[support, k] = coef_new
        obj = float(np.linalg.norm(y - c @ m))
        if objective_log is not None:
            objective_log.append(obj)
        if prev is not None and prev - obj < tol * max(prev, 1e-30):
            break
        prev = obj
    return StainMatrix(m, init.labels)


def save_stain_matrix(m: StainMatrix, path: str | Path) -> None:
    doc = {"labels": list(m.labels), "vectors": m.vectors.tolist()}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_stain_matrix(path: str | Path) -> StainMatrix:
    doc = json.loads(Path(path).read_text())
    extra = set(doc) - {"labels", "vectors"}
    if extra or set(doc) != {"labels", "vectors"}:
        raise ValueError(f"stain matrix file must hold exactly labels+vectors, got {sorted(doc)}")
    return StainMatrix(np.asarray(doc["vectors"], dtype=np.float64), tuple(doc["labels"]))
