"""Discrete parallel-beam forward model.

Each detector bin defines one ray; its weight on a pixel is the exact length
of the ray segment inside that pixel, found by marching the ray through the
pixel lattice (Siddon-style parametric traversal).  Per-view weights are
assembled once into sparse matrices so that forward projection, its exact
adjoint, and the various row/column sums used by the iterative solvers all
share the same numbers.

Conventions: the grid is centered on the origin; at 0 degrees a ray runs
along the column axis (crossing all rows), and the detector offset axis runs
along the rows.  Bin 0 sits at the most negative perpendicular offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

_LENGTH_TOL = 1e-12


@dataclass
class ImageGrid:
    """2-D pixel array with a physical pixel size."""

    values: np.ndarray
    pixel_size: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("image values must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("image values must be finite")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def n_pixels(self) -> int:
        return self.values.size


@dataclass
class Sinogram:
    """Per-view, per-bin line integrals with their acquisition angles."""

    values: np.ndarray
    angles: np.ndarray
    bin_spacing: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.angles = _angles_array(self.angles)
        if self.values.ndim != 2:
            raise ValueError("sinogram values must be 2-D (n_views, n_bins)")
        if self.values.shape[0] != self.angles.size:
            raise ValueError("sinogram row count must equal the number of angles")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sinogram values must be finite")
        if self.bin_spacing <= 0:
            raise ValueError("bin_spacing must be positive")

    @property
    def n_views(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SparseRow:
    """One system-matrix row: pixel indices and intersection lengths."""

    indices: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.size)


def _angles_array(angles) -> np.ndarray:
    """Accept an AngleSet, array, or scalar sequence of degrees."""
    inner = getattr(angles, "angles", angles)
    arr = np.atleast_1d(np.asarray(inner, dtype=float))
    if arr.ndim != 1:
        raise ValueError("angles must be a 1-D sequence of degrees")
    return arr


def default_n_bins(shape: tuple[int, int]) -> int:
    """Detector bins covering the grid diagonal at every angle."""
    return math.ceil(math.sqrt(2.0) * max(shape))


def bin_offsets(n_bins: int, bin_spacing: float) -> np.ndarray:
    """Signed perpendicular offsets of bin centers from the grid center."""
    return (np.arange(n_bins) - (n_bins - 1) / 2.0) * bin_spacing


def _ray_pixel_weights(
    shape: tuple[int, int], pixel_size: float, angle_deg: float, offset: float
) -> tuple[np.ndarray, np.ndarray]:
    """Flat pixel indices and intersection lengths for one ray.

    The ray passes through the point ``offset * u`` with unit direction
    ``d``, where d = (sin a, cos a) and u = (cos a, -sin a) in (x, y)
    physical coordinates (x along columns, y along rows).
    """
    n_rows, n_cols = shape
    h = pixel_size
    a = math.radians(angle_deg)
    dx, dy = math.sin(a), math.cos(a)
    px, py = offset * math.cos(a), offset * -math.sin(a)
    x_min, x_max = -n_cols * h / 2.0, n_cols * h / 2.0
    y_min, y_max = -n_rows * h / 2.0, n_rows * h / 2.0

    # slab clipping for the parametric range inside the grid
    t_lo, t_hi = -np.inf, np.inf
    for d, p, lo, hi in ((dx, px, x_min, x_max), (dy, py, y_min, y_max)):
        if abs(d) > 1e-14:
            t0, t1 = (lo - p) / d, (hi - p) / d
            t_lo = max(t_lo, min(t0, t1))
            t_hi = min(t_hi, max(t0, t1))
        elif not (lo <= p <= hi):
            return np.empty(0, dtype=np.int64), np.empty(0)
    if not (t_hi - t_lo > _LENGTH_TOL * h):
        return np.empty(0, dtype=np.int64), np.empty(0)

    crossings = [np.array([t_lo, t_hi])]
    if abs(dx) > 1e-14:
        tx = (x_min + h * np.arange(n_cols + 1) - px) / dx
        crossings.append(tx[(tx > t_lo) & (tx < t_hi)])
    if abs(dy) > 1e-14:
        ty = (y_min + h * np.arange(n_rows + 1) - py) / dy
        crossings.append(ty[(ty > t_lo) & (ty < t_hi)])
    t = np.unique(np.concatenate(crossings))
    lengths = np.diff(t)
    keep = lengths > _LENGTH_TOL * h
    if not np.any(keep):
        return np.empty(0, dtype=np.int64), np.empty(0)
    lengths = lengths[keep]
    t_mid = (t[:-1] + t[1:])[keep] / 2.0
    cols = np.clip(((px + t_mid * dx - x_min) / h).astype(np.int64), 0, n_cols - 1)
    rows = np.clip(((py + t_mid * dy - y_min) / h).astype(np.int64), 0, n_rows - 1)
    return rows * n_cols + cols, lengths


def system_row(
    shape: tuple[int, int],
    pixel_size: float,
    angle_deg: float,
    bin_index: int,
    n_bins: int,
    bin_spacing: float,
) -> SparseRow:
    """Exact ray-pixel intersection lengths for one detector bin.

    Returns an empty row when the ray misses the grid.
    """
    if not 0 <= bin_index < n_bins:
        raise ValueError(f"bin_index {bin_index} outside [0, {n_bins})")
    offset = float(bin_offsets(n_bins, bin_spacing)[bin_index])
    idx, w = _ray_pixel_weights(shape, pixel_size, angle_deg, offset)
    if idx.size and np.unique(idx).size != idx.size:
        # a near-duplicate boundary crossing split a pixel into two segments
        order = np.argsort(idx, kind="stable")
        idx, w = idx[order], w[order]
        uniq, start = np.unique(idx, return_index=True)
        w = np.add.reduceat(w, start)
        idx = uniq
    return SparseRow(idx, w)


class SystemMatrix:
    """Cached per-view sparse weight blocks for one acquisition geometry."""

    def __init__(
        self,
        shape: tuple[int, int],
        pixel_size: float,
        angles,
        n_bins: int | None = None,
        bin_spacing: float | None = None,
    ):
        self.shape = (int(shape[0]), int(shape[1]))
        self.pixel_size = float(pixel_size)
        self.angles = _angles_array(angles)
        self.n_bins = int(n_bins) if n_bins is not None else default_n_bins(self.shape)
        self.bin_spacing = float(bin_spacing) if bin_spacing is not None else self.pixel_size
        if self.n_bins < 1:
            raise ValueError("n_bins must be positive")
        if self.bin_spacing <= 0:
            raise ValueError("bin_spacing must be positive")
        self.n_pixels = self.shape[0] * self.shape[1]
        offsets = bin_offsets(self.n_bins, self.bin_spacing)
        self.view_blocks: list[sp.csr_matrix] = []
        for angle in self.angles:
            rows, cols, data = [], [], []
            for b, offset in enumerate(offsets):
                idx, w = _ray_pixel_weights(self.shape, self.pixel_size, float(angle), float(offset))
                if idx.size:
                    rows.append(np.full(idx.size, b, dtype=np.int64))
                    cols.append(idx)
                    data.append(w)
            if rows:
                block = sp.coo_matrix(
                    (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(self.n_bins, self.n_pixels),
                ).tocsr()
            else:
                block = sp.csr_matrix((self.n_bins, self.n_pixels))
            self.view_blocks.append(block)
        # per-ray sums of weights (Siddon chord lengths), one row per view
        self.ray_sums = np.stack(
            [np.asarray(block.sum(axis=1)).ravel() for block in self.view_blocks]
        )
        self._view_col_sums: np.ndarray | None = None

    @property
    def n_views(self) -> int:
        return self.angles.size

    @property
    def view_col_sums(self) -> np.ndarray:
        """Per-view, per-pixel weight sums, shape (n_views, n_pixels)."""
        if self._view_col_sums is None:
            self._view_col_sums = np.stack(
                [np.asarray(block.sum(axis=0)).ravel() for block in self.view_blocks]
            )
        return self._view_col_sums

    def forward_values(self, image_values: np.ndarray) -> np.ndarray:
        flat = np.asarray(image_values, dtype=float).ravel()
        if flat.size != self.n_pixels:
            raise ValueError("image does not match the system-matrix grid")
        return np.stack([block @ flat for block in self.view_blocks])

    def back_values(self, sino_values: np.ndarray) -> np.ndarray:
        sino_values = np.asarray(sino_values, dtype=float)
        if sino_values.shape != (self.n_views, self.n_bins):
            raise ValueError("sinogram does not match the system-matrix geometry")
        out = np.zeros(self.n_pixels)
        for block, row in zip(self.view_blocks, sino_values):
            out += block.T @ row
        return out.reshape(self.shape)

    def stacked(self) -> sp.csr_matrix:
        """All views stacked into one (n_views * n_bins, n_pixels) matrix."""
        return sp.vstack(self.view_blocks, format="csr")

    def subset_col_sums(self, subsets: Sequence[Sequence[int]]) -> np.ndarray:
        """Per-pixel weight sums over each view subset, shape (L, n_pixels)."""
        return np.stack(
            [self.view_col_sums[list(subset)].sum(axis=0) for subset in subsets]
        )

    def subset_weighted_col_sums(self, subsets: Sequence[Sequence[int]]) -> np.ndarray:
        """Per-pixel sums of weight * ray-sum over each subset (solver denominators)."""
        out = np.zeros((len(subsets), self.n_pixels))
        for m, subset in enumerate(subsets):
            for v in subset:
                out[m] += self.view_blocks[v].T @ self.ray_sums[v]
        return out


def forward_project(
    image: ImageGrid,
    angles,
    n_bins: int | None = None,
    bin_spacing: float | None = None,
    system: SystemMatrix | None = None,
) -> Sinogram:
    """Line integrals of ``image`` along every ray of every view."""
    if system is None:
        system = SystemMatrix(image.values.shape, image.pixel_size, angles, n_bins, bin_spacing)
    values = system.forward_values(image.values)
    return Sinogram(values, system.angles, system.bin_spacing)


def back_project(
    sino: Sinogram,
    shape: tuple[int, int],
    pixel_size: float = 1.0,
    system: SystemMatrix | None = None,
) -> ImageGrid:
    """Unweighted adjoint of :func:`forward_project` (same weights, transposed)."""
    if system is None:
        system = SystemMatrix(shape, pixel_size, sino.angles, sino.n_bins, sino.bin_spacing)
    return ImageGrid(system.back_values(sino.values), system.pixel_size)


def row_sums(
    angles,
    shape: tuple[int, int],
    pixel_size: float = 1.0,
    n_bins: int | None = None,
    bin_spacing: float | None = None,
    subsets: Sequence[Sequence[int]] | None = None,
    system: SystemMatrix | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-ray weight sums and, when subsets are given, per-pixel subset sums."""
    if system is None:
        system = SystemMatrix(shape, pixel_size, angles, n_bins, bin_spacing)
    per_pixel = system.subset_col_sums(subsets) if subsets is not None else None
    return system.ray_sums, per_pixel
