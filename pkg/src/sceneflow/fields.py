"""Dense scene flow fields and the invalid-pixel convention.

A dense field is an (H, W, 4) float array holding (u, v, d0, d1) per
pixel. Invalid pixels carry NaN in all four components; valid pixels are
all-finite with positive disparities. NaN never compares equal to any
valid vector, which makes the sentinel unambiguous.
"""

from __future__ import annotations

import numpy as np


def invalid_vector() -> np.ndarray:
    """The 4-component invalid sentinel."""
    return np.full(4, np.nan)


def new_field(height: int, width: int) -> np.ndarray:
    """Allocate an all-invalid (H, W, 4) field."""
    return np.full((height, width, 4), np.nan)


def valid_mask(field: np.ndarray) -> np.ndarray:
    """Boolean (H, W) mask of pixels carrying a valid scene flow vector.

    Valid means all four components finite and both disparities positive.
    """
    finite = np.all(np.isfinite(field), axis=-1)
    return finite & (field[..., 2] > 0) & (field[..., 3] > 0)
