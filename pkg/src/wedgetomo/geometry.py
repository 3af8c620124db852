"""Acquisition angle sets for limited-tilt parallel-beam scans.

Two sampling modes are supported: equally angled (uniform angular spacing,
the conventional tilt-series scheme) and equally sloped (tangents advancing
in equal increments, the linogram-style scheme).  Parallel-beam angles are
pi-periodic and are kept in degrees within the half-open interval (-90, 90].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ANGLE_TOL_DEG = 1e-9


class SamplingMode(enum.Enum):
    EQUALLY_ANGLED = "ea"
    EQUALLY_SLOPED = "es"


@dataclass(frozen=True)
class AngleSet:
    """Ordered projection angles (degrees) over a tilt range.

    Angles must be strictly increasing, lie in (-90, 90], and stay inside
    [tilt_min, tilt_max].  Equally-angled sets with two or more angles must
    have uniform spacing to within ``ANGLE_TOL_DEG``.
    """

    angles: np.ndarray
    mode: SamplingMode
    tilt_min: float
    tilt_max: float

    def __post_init__(self):
        arr = np.asarray(self.angles, dtype=float)
        object.__setattr__(self, "angles", arr)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("angle set must be a nonempty 1-D sequence")
        if np.any(arr <= -90.0) or np.any(arr > 90.0):
            raise ValueError("angles must lie in (-90, 90] degrees")
        if arr.size > 1 and np.any(np.diff(arr) <= ANGLE_TOL_DEG):
            raise ValueError("angles must be strictly increasing with no duplicates")
        if self.tilt_min >= self.tilt_max:
            raise ValueError("tilt_min must be below tilt_max")
        if arr.min() < self.tilt_min - ANGLE_TOL_DEG or arr.max() > self.tilt_max + ANGLE_TOL_DEG:
            raise ValueError("angles fall outside the stated tilt range")
        if self.mode is SamplingMode.EQUALLY_ANGLED and arr.size >= 2:
            gaps = np.diff(arr)
            if np.any(np.abs(gaps - gaps[0]) > ANGLE_TOL_DEG):
                raise ValueError("equally-angled set has non-uniform spacing")

    def __len__(self) -> int:
        return int(self.angles.size)

    def __iter__(self):
        return iter(self.angles)


def ea_angles(n_views: int, tilt_min: float, tilt_max: float) -> AngleSet:
    """Equally-angled set: both endpoints included, uniform spacing.

    A single view sits at the midpoint of the range.
    """
    if n_views < 1:
        raise ValueError(f"n_views must be positive, got {n_views}")
    if tilt_min >= tilt_max:
        raise ValueError("tilt_min must be below tilt_max")
    if n_views == 1:
        arr = np.array([(tilt_min + tilt_max) / 2.0])
    else:
        arr = np.linspace(tilt_min, tilt_max, n_views)
    return AngleSet(arr, SamplingMode.EQUALLY_ANGLED, tilt_min, tilt_max)


def es_slopes(n_half: int) -> np.ndarray:
    """Raw equally-sloped tilt angles in degrees, 2*n_half of them.

    The first n_half angles have tangents stepping by 2/n_half from -1;
    the remaining n_half have cotangents stepping the same way, covering
    slopes from 45 degrees up toward (but never reaching) 135 degrees.
    No range filtering or periodic mapping is applied here.
    """
    if n_half < 1:
        raise ValueError(f"n_half must be positive, got {n_half}")
    n = np.arange(1, n_half + 1, dtype=float)
    first = -np.degrees(np.arctan((n_half + 2.0 - 2.0 * n) / n_half))
    n = np.arange(n_half + 1, 2 * n_half + 1, dtype=float)
    second = 90.0 - np.degrees(np.arctan((3.0 * n_half + 2.0 - 2.0 * n) / n_half))
    return np.concatenate([first, second])


def restrict_to_tilt_range(slopes: Iterable[float], tilt_min: float, tilt_max: float) -> AngleSet:
    """Map slopes into (-90, 90] (pi-periodic) and keep those inside the range."""
    if tilt_min >= tilt_max:
        raise ValueError("tilt_min must be below tilt_max")
    for bound in (tilt_min, tilt_max):
        if bound <= -90.0 or bound > 90.0:
            raise ValueError("tilt bounds must lie in (-90, 90]")
    mapped = []
    for theta in np.asarray(list(slopes), dtype=float):
        while theta > 90.0:
            theta -= 180.0
        while theta <= -90.0:
            theta += 180.0
        if tilt_min - ANGLE_TOL_DEG <= theta <= tilt_max + ANGLE_TOL_DEG:
            mapped.append(min(max(theta, tilt_min), tilt_max))
    arr = np.sort(np.asarray(mapped))
    return AngleSet(arr, SamplingMode.EQUALLY_SLOPED, tilt_min, tilt_max)


def subsample_with_endpoints(angles: AngleSet, target: int) -> AngleSet:
    """Pick ``target`` views: the range endpoints plus evenly placed interior picks.

    Each interior pick is the unused input member nearest to one of
    ``target - 2`` angle positions spaced uniformly across the open tilt
    range, deduplicated against the endpoints.  Keeps the subsampled set as
    even as the input allows.  Deterministic.
    """
    m = len(angles)
    if target < 2:
        raise ValueError(f"target must be at least 2, got {target}")
    if target > m + 2:
        raise ValueError(f"target {target} exceeds input size {m} plus endpoints")
    lo, hi = angles.tilt_min, angles.tilt_max

    def is_endpoint(value: float) -> bool:
        return abs(value - lo) <= ANGLE_TOL_DEG or abs(value - hi) <= ANGLE_TOL_DEG

    eligible = [i for i in range(m) if not is_endpoint(float(angles.angles[i]))]
    need = target - 2
    if need > len(eligible):
        raise ValueError(
            f"cannot reach {target} views from {m} inputs after endpoint deduplication"
        )
    chosen: list[float] = [lo, hi]
    used: set[int] = set()
    for goal in np.linspace(lo, hi, target)[1:-1]:
        best = min(
            (i for i in eligible if i not in used),
            key=lambda i: (abs(float(angles.angles[i]) - goal), i),
        )
        used.add(best)
        chosen.append(float(angles.angles[best]))
    return AngleSet(np.sort(np.asarray(chosen)), angles.mode, lo, hi)


def es_angles(n_half: int, tilt_min: float, tilt_max: float, target: int | None = None) -> AngleSet:
    """Equally-sloped acquisition set: slopes, range restriction, optional subsample."""
    restricted = restrict_to_tilt_range(es_slopes(n_half), tilt_min, tilt_max)
    if target is None:
        return restricted
    return subsample_with_endpoints(restricted, target)


def write_angles(path: str | Path, angles: AngleSet | Sequence[float]) -> None:
    """One angle per line, degrees, 9 significant digits."""
    values = angles.angles if isinstance(angles, AngleSet) else np.asarray(angles, dtype=float)
    with open(path, "w") as fh:
        for value in values:
            fh.write(f"{value:.9g}\n")


def read_angles(path: str | Path) -> np.ndarray:
    """Read a one-angle-per-line text file (degrees)."""
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            values.append(float(line))
    if not values:
        raise ValueError(f"no angles found in {path}")
    return np.asarray(values)
