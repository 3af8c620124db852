"""Ordered-subset simultaneous algebraic reconstruction.

Views are partitioned into disjoint subsets; each step updates every pixel
simultaneously from the residuals of one subset, cycling m = k mod L.  Each
pixel increment is the subset's weight-normalized, ray-sum-normalized
residual backprojection; pixels a subset never touches are left unchanged.
An optional nonnegativity clamp and support mask are applied after every
step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import rmse, ssim
from .projector import ImageGrid, Sinogram, SystemMatrix


@dataclass(frozen=True)
class SubsetPartition:
    """Disjoint view-index subsets covering all views."""

    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        for subset in self.subsets:
            if not subset:
                raise ValueError("every subset must be nonempty")
            for v in subset:
                if v in seen:
                    raise ValueError(f"view {v} appears in more than one subset")
                seen.add(v)
        if seen != set(range(len(seen))):
            raise ValueError("subsets must cover views 0..n_views-1 exactly")

    @property
    def n_subsets(self) -> int:
        return len(self.subsets)

    @property
    def n_views(self) -> int:
        return sum(len(s) for s in self.subsets)


def partition_views(n_views: int, n_subsets: int) -> SubsetPartition:
    """Assign view v to subset v mod L."""
    if not 1 <= n_subsets <= n_views:
        raise ValueError(f"subset count must be in [1, {n_views}], got {n_subsets}")
    subsets = tuple(
        tuple(range(m, n_views, n_subsets)) for m in range(n_subsets)
    )
    return SubsetPartition(subsets)


@dataclass
class SartConfig:
    """Solver settings; ``iterations`` counts single-subset passes."""

    iterations: int
    subsets: int = 1
    nonnegativity: bool = True
    support_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.subsets < 1:
            raise ValueError("subsets must be positive")


def circle_support(shape: tuple[int, int]) -> np.ndarray:
    """Boolean mask of the circle inscribed in the grid (loose support)."""
    rows, cols = shape
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    radius = min(rows, cols) / 2.0
    yy, xx = np.mgrid[0:rows, 0:cols]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


def _check_mask(mask: np.ndarray | None, shape: tuple[int, int]) -> np.ndarray | None:
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.shape != shape:
        raise ValueError(f"support mask shape {mask.shape} does not match image {shape}")
    return mask.astype(bool)


def apply_constraints(
    values: np.ndarray, nonnegativity: bool, mask: np.ndarray | None
) -> np.ndarray:
    if nonnegativity:
        values = np.maximum(values, 0.0)
    if mask is not None:
        values = np.where(mask, values, 0.0)
    return values


def os_sart_step(
    image: ImageGrid,
    sino: Sinogram,
    subset: tuple[int, ...],
    system: SystemMatrix,
    subset_col_sum: np.ndarray,
    nonnegativity: bool = False,
    support_mask: np.ndarray | None = None,
) -> ImageGrid:
    """One simultaneous update from the views in ``subset``.

    ``subset_col_sum`` is the per-pixel weight sum over the subset's rays
    (flat, length n_pixels); pixels where it vanishes are skipped, as are
    rays with zero total weight.
    """
    if image.values.shape != system.shape:
        raise ValueError("image shape does not match the system matrix")
    if sino.values.shape != (system.n_views, system.n_bins):
        raise ValueError("sinogram shape does not match the system matrix")
    flat = image.values.ravel()
    accum = np.zeros_like(flat)
    for v in subset:
        block = system.view_blocks[v]
        residual = sino.values[v] - block @ flat
        ray_sum = system.ray_sums[v]
        scaled = np.divide(residual, ray_sum, out=np.zeros_like(residual), where=ray_sum > 0)
        accum += block.T @ scaled
    update = np.divide(
        accum, subset_col_sum, out=np.zeros_like(accum), where=subset_col_sum > 0
    )
    values = flat + update
    mask = _check_mask(support_mask, system.shape)
    values = apply_constraints(values, nonnegativity, mask.ravel() if mask is not None else None)
    return ImageGrid(values.reshape(system.shape), image.pixel_size)


def os_sart(
    initial: ImageGrid,
    sino: Sinogram,
    config: SartConfig,
    system: SystemMatrix | None = None,
    reference: ImageGrid | None = None,
) -> tuple[ImageGrid, list[dict]]:
    """Run ``config.iterations`` subset passes, cycling m = k mod L.

    Returns the final image and a trace with one row per full cycle
    (iteration index, data residual, and RMSE/SSIM against ``reference``
    when one is given).
    """
    if system is None:
        system = SystemMatrix(
            initial.values.shape, initial.pixel_size, sino.angles, sino.n_bins, sino.bin_spacing
        )
    partition = partition_views(system.n_views, config.subsets)
    subset_sums = system.subset_col_sums(partition.subsets)
    mask = _check_mask(config.support_mask, system.shape)
    mask_flat = mask.ravel() if mask is not None else None

    flat = initial.values.ravel().copy()
    trace: list[dict] = []

    def record(step: int) -> None:
        row = {"iteration": step}
        if reference is not None:
            current = ImageGrid(flat.reshape(system.shape), initial.pixel_size)
            row["rmse"] = rmse(current, reference)
            row["ssim"] = ssim(current, reference)
        trace.append(row)

    for k in range(config.iterations):
        m = k % partition.n_subsets
        accum = np.zeros_like(flat)
        for v in partition.subsets[m]:
            block = system.view_blocks[v]
            residual = sino.values[v] - block @ flat
            ray_sum = system.ray_sums[v]
            scaled = np.divide(
                residual, ray_sum, out=np.zeros_like(residual), where=ray_sum > 0
            )
            accum += block.T @ scaled
        col = subset_sums[m]
        flat += np.divide(accum, col, out=np.zeros_like(accum), where=col > 0)
        flat = apply_constraints(flat, config.nonnegativity, mask_flat)
        if (k + 1) % partition.n_subsets == 0:
            record(k + 1)

    result = ImageGrid(flat.reshape(system.shape), initial.pixel_size)
    return result, trace
