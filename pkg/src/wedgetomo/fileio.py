"""Artifact file formats.

Images and sinograms are stored as little-endian 32-bit float rasters in
row-major order (view-major for sinograms), with a sidecar text header at
``<path>.hdr`` carrying the geometry as ``key = value`` lines.  Angle lists
ride inside sinogram headers at full precision.  Traces and result tables
are plain CSV.  Images can additionally be exported as 8-bit PGMs with a
stated display window.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dictlearn import Dictionary
from .projector import ImageGrid, Sinogram

_RASTER_DTYPE = "<f4"


def _header_path(path: str | Path) -> Path:
    return Path(str(path) + ".hdr")


def _write_header(path: str | Path, fields: dict[str, str]) -> None:
    with open(_header_path(path), "w") as fh:
        for key, value in fields.items():
            fh.write(f"{key} = {value}\n")


def _read_header(path: str | Path) -> dict[str, str]:
    fields: dict[str, str] = {}
    with open(_header_path(path)) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    return fields


def write_image(path: str | Path, image: ImageGrid) -> None:
    image.values.astype(_RASTER_DTYPE).tofile(path)
    _write_header(
        path,
        {
            "type": "image",
            "height": str(image.height),
            "width": str(image.width),
            "pixel_size": f"{image.pixel_size:.17g}",
        },
    )


def read_image(path: str | Path) -> ImageGrid:
    fields = _read_header(path)
    if fields.get("type") != "image":
        raise ValueError(f"{path} is not an image raster (header type: {fields.get('type')})")
    height, width = int(fields["height"]), int(fields["width"])
    values = np.fromfile(path, dtype=_RASTER_DTYPE)
    if values.size != height * width:
        raise ValueError(f"{path}: raster holds {values.size} values, header says {height * width}")
    return ImageGrid(values.astype(float).reshape(height, width), float(fields["pixel_size"]))


def write_sinogram(path: str | Path, sino: Sinogram) -> None:
    sino.values.astype(_RASTER_DTYPE).tofile(path)
    _write_header(
        path,
        {
            "type": "sinogram",
            "n_views": str(sino.n_views),
            "n_bins": str(sino.n_bins),
            "bin_spacing": f"{sino.bin_spacing:.17g}",
            "angles": " ".join(f"{a:.17g}" for a in sino.angles),
        },
    )


def read_sinogram(path: str | Path) -> Sinogram:
    fields = _read_header(path)
    if fields.get("type") != "sinogram":
        raise ValueError(f"{path} is not a sinogram raster (header type: {fields.get('type')})")
    n_views, n_bins = int(fields["n_views"]), int(fields["n_bins"])
    angles = np.array([float(a) for a in fields["angles"].split()])
    if angles.size != n_views:
        raise ValueError(f"{path}: header lists {angles.size} angles for {n_views} views")
    values = np.fromfile(path, dtype=_RASTER_DTYPE)
    if values.size != n_views * n_bins:
        raise ValueError(f"{path}: raster holds {values.size} values, header says {n_views * n_bins}")
    return Sinogram(
        values.astype(float).reshape(n_views, n_bins), angles, float(fields["bin_spacing"])
    )


def write_dictionary(path: str | Path, dictionary: Dictionary) -> None:
    dictionary.atoms.astype(_RASTER_DTYPE).tofile(path)
    _write_header(
        path,
        {
            "type": "dictionary",
            "patch_dim": str(dictionary.patch_dim),
            "n_atoms": str(dictionary.n_atoms),
        },
    )


def read_dictionary(path: str | Path) -> Dictionary:
    fields = _read_header(path)
    if fields.get("type") != "dictionary":
        raise ValueError(f"{path} is not a dictionary raster (header type: {fields.get('type')})")
    patch_dim, n_atoms = int(fields["patch_dim"]), int(fields["n_atoms"])
    values = np.fromfile(path, dtype=_RASTER_DTYPE)
    if values.size != patch_dim * n_atoms:
        raise ValueError(
            f"{path}: raster holds {values.size} values, header says {patch_dim * n_atoms}"
        )
    atoms = values.astype(float).reshape(patch_dim, n_atoms)
    # float32 storage perturbs norms; restore exact unit columns
    atoms /= np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms)


def write_pgm(path: str | Path, image: ImageGrid, window: tuple[float, float]) -> None:
    """8-bit portable graymap with values clipped to the display window."""
    lo, hi = window
    if hi <= lo:
        raise ValueError("display window must have hi > lo")
    scaled = np.clip((image.values - lo) / (hi - lo), 0.0, 1.0)
    data = np.round(scaled * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n# window {lo:g} {hi:g}\n{image.width} {image.height}\n255\n".encode())
        fh.write(data.tobytes())


def write_trace_csv(path: str | Path, rows: list[dict], columns: list[str]) -> None:
    """Trace/metric rows as CSV; missing cells are left empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(c)) for c in columns])


def read_csv_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)
