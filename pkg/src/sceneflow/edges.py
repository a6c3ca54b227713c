"""Boundary strength maps steering interpolation and refinement.

Geodesic distances and smoothness weights both read a per-pixel
boundary strength in [0, 1]. The built-in detector is a smoothed
gradient magnitude; externally computed maps (e.g. from a learned
contour detector) can be loaded from 16-bit grayscale PNG files
instead.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .image import to_gray


def gradient_boundaries(image: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Normalized gradient magnitude of the smoothed gray image.

    Magnitudes are scaled by their 99th percentile and clamped to
    [0, 1], which keeps the map comparable across exposure changes.
    """
    gray = to_gray(np.asarray(image, dtype=np.float64))
    smooth = gaussian_filter(gray, sigma, mode="nearest")
    gy, gx = np.gradient(smooth)
    mag = np.hypot(gx, gy)
    scale = np.percentile(mag, 99.0)
    if scale > 0:
        mag = mag / scale
    return np.clip(mag, 0.0, 1.0)


def load_boundaries(path: str, shape: tuple[int, int]) -> np.ndarray:
    """Read a boundary map stored as 16-bit grayscale PNG.

    Values are mapped linearly from [0, 65535] to [0, 1] and must match
    the reference image shape.
    """
    import cv2

    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"cannot read boundary map: {path}")
    if raw.ndim != 2:
        raise ValueError("boundary maps must be single-channel")
    if raw.shape != tuple(shape):
        raise ValueError(f"boundary map shape {raw.shape} does not match image {tuple(shape)}")
    return raw.astype(np.float64) / 65535.0


def boundary_map(image: np.ndarray, source: str = "baseline") -> np.ndarray:
    """Dispatch on the configured boundary source.

    "baseline" runs the built-in detector; "file:<path>" loads a
    precomputed map for the reference image.
    """
    if source == "baseline":
        return gradient_boundaries(image)
    if source.startswith("file:"):
        return load_boundaries(source[5:], np.asarray(image).shape[:2])
    raise ValueError(f"unknown boundary source: {source!r}")
