"""Scale handling for coarse-to-fine matching.

Instead of shrinking the images, every level keeps the full pixel grid
and only the amount of smoothing changes: level s holds the input
area-downsampled by 2**s and upsampled back with Lanczos interpolation.
Coarse-level operations then sample this smoothed image with stride
2**s, so windows cover the same number of samples at every level while
all coordinates stay in full-resolution pixel units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from PIL import Image


@dataclass
class ScalePyramid:
    """Per-level smoothed copies of a set of images.

    levels[s] lists the images smoothed for sampling stride factors[s];
    factors run [1, 2, 4, ..., 2**k] and level 0 is the unmodified input.
    """

    levels: list[list[np.ndarray]]
    factors: list[int]


def _smooth_for_stride(img: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return img.astype(np.float64, copy=True)
    if img.ndim == 3:
        return np.stack(
            [_smooth_for_stride(img[:, :, c], factor) for c in range(img.shape[2])],
            axis=2,
        )
    h, w = img.shape
    small = (max(1, math.ceil(w / factor)), max(1, math.ceil(h / factor)))
    pim = Image.fromarray(img.astype(np.float32), mode="F")
    down = pim.resize(small, Image.Resampling.BOX)
    up = down.resize((w, h), Image.Resampling.LANCZOS)
    out = np.asarray(up, dtype=np.float64)
    # Lanczos ringing can overshoot the input range slightly.
    return np.clip(out, 0.0, 1.0)


def build_scale_pyramid(images: Sequence[np.ndarray], subscales: int) -> ScalePyramid:
    """Build smoothed levels for strides 1, 2, ..., 2**subscales.

    Args:
        images: images sharing one pixel grid.
        subscales: number of coarse levels on top of the original scale.

    Raises:
        ValueError: on negative subscales, empty input or shape mismatch.
    """
    if subscales < 0:
        raise ValueError(f"subscales must be >= 0, got {subscales}")
    imgs = [np.asarray(im, dtype=np.float64) for im in images]
    if not imgs:
        raise ValueError("no images given")
    shape = imgs[0].shape[:2]
    if any(im.shape[:2] != shape for im in imgs):
        raise ValueError("all images must share one pixel grid")
    factors = [2**s for s in range(subscales + 1)]
    levels = [[_smooth_for_stride(im, n) for im in imgs] for n in factors]
    return ScalePyramid(levels=levels, factors=factors)
