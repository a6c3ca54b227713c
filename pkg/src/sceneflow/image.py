"""Image conventions and small helpers.

Images are float64 arrays with intensities in [0, 1], either (H, W)
grayscale or (H, W, 3) RGB. Functions accepting images assume this
layout; :func:`as_image` validates it.
"""

from __future__ import annotations

import numpy as np

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def as_image(arr: np.ndarray) -> np.ndarray:
    """Validate and convert an array to the package image convention."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")
    if img.size == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return img


def to_gray(img: np.ndarray) -> np.ndarray:
    """Collapse an RGB image to luma; grayscale passes through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img @ _LUMA
