"""Reconstruction quality metrics: root-mean-square error and SSIM.

SSIM follows the standard Gaussian-weighted sliding-window form
(11x11 window, sigma 1.5, k1=0.01, k2=0.03), averaged over all windows
fully inside the image.  The dynamic range defaults to the maximum of
the reference image and is reported alongside scores since the index
depends on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .projector import ImageGrid


def _values(image) -> np.ndarray:
    arr = image.values if isinstance(image, ImageGrid) else np.asarray(image, dtype=float)
    if arr.ndim != 2:
        raise ValueError("metric inputs must be 2-D images")
    return np.asarray(arr, dtype=float)


def rmse(image, reference) -> float:
    """Root mean square error over all pixels."""
    a, b = _values(image), _values(reference)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass(frozen=True)
class SsimParams:
    window_edge: int = 11
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float | None = None  # None: use max of the reference

    def __post_init__(self):
        if self.window_edge % 2 != 1 or self.window_edge < 1:
            raise ValueError("window_edge must be odd and positive")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be positive")
        if self.dynamic_range is not None and self.dynamic_range <= 0:
            raise ValueError("dynamic_range must be positive")


def _gaussian_window(edge: int, sigma: float) -> np.ndarray:
    half = (edge - 1) / 2.0
    coords = np.arange(edge) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def _window_filter(arr: np.ndarray, window: np.ndarray) -> np.ndarray:
    # window is symmetric, so correlation equals convolution
    return fftconvolve(arr, window, mode="valid")


def ssim(image, reference, params: SsimParams | None = None) -> float:
    """Mean structural similarity between ``image`` and ``reference``.

    Gaussian-weighted local statistics over all fully interior windows;
    returns a value in [-1, 1], exactly 1.0 for identical images.
    """
    params = params or SsimParams()
    a, b = _values(image), _values(reference)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < params.window_edge:
        raise ValueError("image smaller than the SSIM window")
    if a is b or np.array_equal(a, b):
        return 1.0
    dynamic_range = params.dynamic_range
    if dynamic_range is None:
        dynamic_range = float(b.max())
    if dynamic_range <= 0:
        raise ValueError("dynamic range must be positive; pass SsimParams(dynamic_range=...)")
    c1 = (params.k1 * dynamic_range) ** 2
    c2 = (params.k2 * dynamic_range) ** 2
    window = _gaussian_window(params.window_edge, params.gaussian_sigma)

    mu_a = _window_filter(a, window)
    mu_b = _window_filter(b, window)
    var_a = _window_filter(a * a, window) - mu_a * mu_a
    var_b = _window_filter(b * b, window) - mu_b * mu_b
    cov = _window_filter(a * b, window) - mu_a * mu_b

    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())


def mean_metric_over_stack(images, references, metric) -> float:
    """Arithmetic mean of a per-slice metric over parallel stacks."""
    images, references = list(images), list(references)
    if len(images) != len(references):
        raise ValueError("stacks must have equal length")
    if not images:
        raise ValueError("empty stack")
    return float(np.mean([metric(f, g) for f, g in zip(images, references)]))
