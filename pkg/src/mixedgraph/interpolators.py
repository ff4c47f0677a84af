"""Linear interpolation operators for rotation and homography warps.

Each output patch gets a rectangular bilinear-weight matrix over its source
footprint, which is then padded with dummy unit rows until it is square and
full rank.  Dummy bookkeeping is kept so dummies can be stripped from all
outputs and metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import DegenerateTransformError, PatchGeometryError

# Padded operators must satisfy sigma_min > SV_RTOL * sigma_max.
SV_RTOL = 1e-10


@dataclass(frozen=True)
class Rotation:
    """Anti-clockwise rotation (degrees) about the image center."""

    angle_deg: float

    def back_project(self, coords_rc: np.ndarray, image_size) -> np.ndarray:
        h, w = image_size
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        t = math.radians(-self.angle_deg)
        ct, st = math.cos(t), math.sin(t)
        y = coords_rc[:, 0] - cy
        x = coords_rc[:, 1] - cx
        sx = ct * x - st * y + cx
        sy = st * x + ct * y + cy
        return np.column_stack([sy, sx])

    def label(self) -> str:
        return f"rotation({self.angle_deg:g})"


@dataclass(frozen=True)
class Homography:
    """Projective warp; output pixels back-project through the inverse matrix."""

    matrix: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got shape {m.shape}")
        if abs(np.linalg.det(m)) < 1e-12:
            raise DegenerateTransformError("homography matrix is singular")
        object.__setattr__(self, "matrix", tuple(map(tuple, m)))

    def back_project(self, coords_rc: np.ndarray, image_size) -> np.ndarray:
        hinv = np.linalg.inv(np.asarray(self.matrix))
        pts = np.column_stack(
            [coords_rc[:, 1], coords_rc[:, 0], np.ones(len(coords_rc))]
        )
        src = pts @ hinv.T
        wcoord = src[:, 2]
        if np.any(np.abs(wcoord) < 1e-12):
            raise DegenerateTransformError(
                "back-projection has a vanishing homogeneous coordinate"
            )
        return np.column_stack([src[:, 1] / wcoord, src[:, 0] / wcoord])

    def label(self) -> str:
        flat = ";".join(",".join(f"{v:g}" for v in row) for row in self.matrix)
        return f"homography({flat})"


@dataclass(frozen=True)
class InterpolatorOperator:
    """Square padded interpolation matrix with footprint and dummy metadata."""

    matrix: np.ndarray
    real_output_count: int
    dummy_rows: tuple
    source_coords: np.ndarray
    target_coords: np.ndarray
    transform: object = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def real_matrix(self) -> np.ndarray:
        return self.matrix[: self.real_output_count]

    def apply(self, source_values) -> np.ndarray:
        return self.matrix @ np.asarray(source_values, dtype=float)


@dataclass(frozen=True)
class PatchJob:
    """One output tile: its geometry, dropped pixels, and padded operator."""

    origin: tuple
    size: tuple
    operator: InterpolatorOperator
    dropped_coords: np.ndarray


def bilinear_rows(src_rc: np.ndarray, image_size):
    """Bilinear taps for back-projected points; None for out-of-bounds points.

    Returns a list of ([(r, c), ...], [weight, ...]) with zero-weight taps
    removed; weights of surviving entries sum to 1.
    """
    h, w = image_size
    out = []
    for sr, sc in src_rc:
        if not (0.0 <= sr <= h - 1 and 0.0 <= sc <= w - 1):
            out.append(None)
            continue
        br = min(int(math.floor(sr)), h - 2) if h > 1 else 0
        bc = min(int(math.floor(sc)), w - 2) if w > 1 else 0
        fr, fc = sr - br, sc - bc
        taps, wts = [], []
        for dr, wr in ((0, 1.0 - fr), (1, fr)):
            for dc, wc in ((0, 1.0 - fc), (1, fc)):
                wgt = wr * wc
                if wgt > 0.0:
                    taps.append((br + dr, bc + dc))
                    wts.append(wgt)
        out.append((taps, wts))
    return out


def pad_full_rank(
    theta_raw: np.ndarray,
    source_coords,
    target_coords=None,
    transform=None,
) -> InterpolatorOperator:
    """Append dummy unit rows until the operator is square and invertible.

    A rank-revealing (column-pivoted) QR of the raw matrix identifies
    source columns outside the pivot set; each such column gets one unit
    row, which copies an uncovered input pixel as a fake output.
    """
    theta_raw = np.asarray(theta_raw, dtype=float)
    n_real, m = theta_raw.shape
    source_coords = np.asarray(source_coords)
    if len(source_coords) != m:
        raise ValueError("source_coords length must match column count")
    if n_real > m:
        raise PatchGeometryError(
            f"more real outputs ({n_real}) than source pixels ({m})"
        )
    if target_coords is None:
        target_coords = np.zeros((n_real, 2), dtype=int)

    if n_real == m:
        padded = theta_raw
        dummies = ()
    else:
        _, r, perm = sla.qr(theta_raw, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        if n_real > 0 and (diag.min() <= 1e-12 * max(diag.max(), 1.0)):
            raise PatchGeometryError("raw interpolator rows are rank-deficient")
        unpivoted = sorted(perm[n_real:])
        padded = np.vstack(
            [theta_raw]
            + [np.eye(1, m, col) for col in unpivoted]
        )
        dummies = tuple(
            (n_real + i, int(col)) for i, col in enumerate(unpivoted)
        )

    svals = np.linalg.svd(padded, compute_uv=False)
    if svals[-1] <= SV_RTOL * svals[0]:
        raise PatchGeometryError(
            "padded interpolator is singular "
            f"(sigma_min/sigma_max = {svals[-1] / svals[0]:.3e})"
        )
    return InterpolatorOperator(
        matrix=padded,
        real_output_count=n_real,
        dummy_rows=dummies,
        source_coords=source_coords,
        target_coords=np.asarray(target_coords),
        transform=transform,
    )


def build_patch_operator(transform, origin, size, image_size) -> PatchJob:
    """Assemble the padded interpolation operator for one output tile."""
    r0, c0 = origin
    ph, pw = size
    rr, cc = np.mgrid[r0 : r0 + ph, c0 : c0 + pw]
    targets = np.column_stack([rr.ravel(), cc.ravel()])
    src = transform.back_project(targets.astype(float), image_size)
    rows = bilinear_rows(src, image_size)

    real_targets, real_rows, dropped = [], [], []
    for tgt, row in zip(targets, rows):
        if row is None:
            dropped.append(tgt)
        else:
            real_targets.append(tgt)
            real_rows.append(row)
    if not real_rows:
        raise PatchGeometryError(f"patch at {origin} back-projects fully out of bounds")

    footprint = sorted({tap for taps, _ in real_rows for tap in taps})
    col_of = {tap: j for j, tap in enumerate(footprint)}
    theta_raw = np.zeros((len(real_rows), len(footprint)))
    for i, (taps, wts) in enumerate(real_rows):
        for tap, wgt in zip(taps, wts):
            theta_raw[i, col_of[tap]] = wgt

    op = pad_full_rank(
        theta_raw,
        np.asarray(footprint, dtype=int),
        target_coords=np.asarray(real_targets, dtype=int),
        transform=transform,
    )
    return PatchJob(
        origin=(r0, c0),
        size=(ph, pw),
        operator=op,
        dropped_coords=np.asarray(dropped, dtype=int).reshape(-1, 2),
    )


def rotation_operator(angle_deg, origin, size, image_size) -> InterpolatorOperator:
    return build_patch_operator(Rotation(angle_deg), origin, size, image_size).operator


def homography_operator(h_matrix, origin, size, image_size) -> InterpolatorOperator:
    return build_patch_operator(Homography(h_matrix), origin, size, image_size).operator


def tile_image(image_size, transform, patch_size: int = 10):
    """Non-overlapping tiling of the output domain into patch jobs.

    Boundary tiles smaller than the patch size are processed as-is; tiles
    whose real-output set is empty are skipped (their pixels stay invalid).
    """
    h, w = image_size
    if h < 2 or w < 2:
        raise ValueError("image too small to tile")
    jobs = []
    for r0 in range(0, h, patch_size):
        for c0 in range(0, w, patch_size):
            size = (min(patch_size, h - r0), min(patch_size, w - c0))
            try:
                jobs.append(build_patch_operator(transform, (r0, c0), size, (h, w)))
            except PatchGeometryError:
                continue
    return jobs


def parse_transform(spec: str, angle=None, h=None):
    """Build a transform from CLI-style arguments."""
    if spec == "identity":
        return Rotation(0.0)
    if spec == "rotation":
        if angle is None:
            raise ValueError("rotation transform requires an angle")
        return Rotation(float(angle))
    if spec == "homography":
        if h is None:
            raise ValueError("homography transform requires a matrix")
        if isinstance(h, str):
            rows = [[float(v) for v in row.split(",")] for row in h.split(";")]
            h = rows
        return Homography(tuple(map(tuple, np.asarray(h, dtype=float))))
    raise ValueError(f"unknown transform {spec!r}")
