"""Outlier removal between matching and interpolation.

The forward field is checked against an independently matched inverse
field (reference: right image at time 1), small isolated regions are
dropped, disparity-only seeds are recovered where SGM agrees with the
forward disparity, and the survivors are thinned to at most one seed
per 3x3 block.

Pixel bookkeeping uses three aligned (H, W) arrays: the forward field,
a boolean match mask and a per-pixel consistency error. Errors stay
defined for removed pixels (their measured deviation, or infinity where
the correspondence left the image) so re-admitted pixels keep an error
value for later seed selection.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .fields import valid_mask
from .matcher import MatchField


def consistency_filter(
    forward: MatchField,
    inverse: MatchField,
    tau_c: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Compare each forward vector against the inverse field.

    The forward pixel is followed to its position in the inverse
    reference frame (the cross correspondence, rounded to the nearest
    pixel). There the inverse flow must cancel the forward flow and the
    inverse disparities must mirror the forward ones with the time roles
    exchanged. Any deviation above tau_c removes the match.

    Returns:
        (mask, errors): survivors and per-pixel maximum deviation.
        Removed pixels keep their deviation; unmatched pixels and
        correspondences leaving the image carry infinity.
    """
    if forward.stride != 1 or inverse.stride != 1:
        raise ValueError("consistency check expects full-resolution fields")
    h, w = forward.cost.shape
    f = forward.flow
    vf = valid_mask(f)
    xs = np.arange(w)[None, :]
    ys = np.arange(h)[:, None]
    qx = np.floor(xs + f[:, :, 0] - f[:, :, 3] + 0.5)
    qy = np.floor(ys + f[:, :, 1] + 0.5)
    with np.errstate(invalid="ignore"):
        inb = (qx >= 0) & (qx < w) & (qy >= 0) & (qy < h)
    qxc = np.clip(np.nan_to_num(qx), 0, w - 1).astype(np.int64)
    qyc = np.clip(np.nan_to_num(qy), 0, h - 1).astype(np.int64)
    inv = inverse.flow[qyc, qxc]
    vi = valid_mask(inv)

    dev = np.maximum.reduce(
        [
            np.abs(f[:, :, 0] + inv[:, :, 0]),
            np.abs(f[:, :, 1] + inv[:, :, 1]),
            np.abs(f[:, :, 3] - inv[:, :, 2]),
            np.abs(f[:, :, 2] - inv[:, :, 3]),
        ]
    )
    comparable = vf & inb & vi
    errors = np.where(comparable, dev, np.inf)
    mask = comparable & (dev <= tau_c)
    return mask, errors


def _similar(f: np.ndarray, a: tuple[int, int], b: tuple[int, int], tol: float) -> bool:
    return bool(np.all(np.abs(f[a] - f[b]) <= tol))


def region_filter(
    forward: MatchField,
    mask: np.ndarray,
    errors: np.ndarray,
    tolerance: float = 1.0,
    min_size: int = 150,
) -> np.ndarray:
    """Drop small regions of mutually similar surviving matches.

    Surviving matches are grouped by 4-connected flood fill, joining
    neighbors whose vectors differ by at most the tolerance in every
    component. Each region then tries to grow into adjacent removed
    pixels under the same rule (recursively, so whole removed blobs can
    rejoin). Regions that stay below min_size are deleted outright;
    larger regions keep their survivors and restore the re-admitted
    pixels. Never invents vectors: the result is a subset of the valid
    forward field.
    """
    f = forward.flow
    h, w = mask.shape
    vf = valid_mask(f)
    out = np.zeros_like(mask)
    visited = np.zeros_like(mask)  # survivors assigned to some region
    claimed = np.zeros_like(mask)  # removed pixels claimed by some region
    neighbors = ((0, 1), (0, -1), (1, 0), (-1, 0))
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or visited[sy, sx]:
                continue
            # flood fill among survivors
            members = [(sy, sx)]
            visited[sy, sx] = True
            queue = deque(members)
            while queue:
                cy, cx = queue.popleft()
                for dy, dx in neighbors:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not visited[ny, nx]:
                        if _similar(f, (cy, cx), (ny, nx), tolerance):
                            visited[ny, nx] = True
                            members.append((ny, nx))
                            queue.append((ny, nx))
            # grow into removed pixels with valid vectors
            grown: list[tuple[int, int]] = []
            queue = deque(members)
            while queue:
                cy, cx = queue.popleft()
                for dy, dx in neighbors:
                    ny, nx = cy + dy, cx + dx
                    if (
                        0 <= ny < h
                        and 0 <= nx < w
                        and not mask[ny, nx]
                        and vf[ny, nx]
                        and not claimed[ny, nx]
                        and _similar(f, (cy, cx), (ny, nx), tolerance)
                    ):
                        claimed[ny, nx] = True
                        grown.append((ny, nx))
                        queue.append((ny, nx))
            if len(members) + len(grown) >= min_size:
                for py, px in members + grown:
                    out[py, px] = True
    return out


def disparity_fill(
    forward: MatchField,
    mask: np.ndarray,
    sgm_disp: np.ndarray,
    tau_c: float = 1.0,
) -> np.ndarray:
    """Geometry-only seed candidates at pixels without a joint match.

    The unfiltered forward d0 is admitted where the independent SGM
    disparity agrees within tau_c. Returns the fill mask; admitted
    pixels use the forward d0 with |d0 - sgm| as their error.
    """
    d0 = forward.flow[:, :, 2]
    with np.errstate(invalid="ignore"):
        agree = np.abs(d0 - sgm_disp) <= tau_c
    return (~mask) & valid_mask(forward.flow) & np.isfinite(sgm_disp) & agree


def _block_winners(
    mask: np.ndarray,
    errors: np.ndarray,
    tiers: np.ndarray | None = None,
    block: int = 3,
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest-error representative per non-overlapping block.

    Ties resolve by row-major pixel order; an optional tier array takes
    precedence over the error (lower tier wins regardless of error).
    Returns (x, y) winner coordinates.
    """
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    err = errors[ys, xs]
    tier = np.zeros_like(err) if tiers is None else tiers[ys, xs].astype(np.float64)
    blocks = (ys // block) * (-(-mask.shape[1] // block)) + xs // block
    rowmajor = ys * mask.shape[1] + xs
    order = np.lexsort((rowmajor, err, tier, blocks))
    first = np.ones(order.size, dtype=bool)
    first[1:] = blocks[order][1:] != blocks[order][:-1]
    sel = order[first]
    return xs[sel], ys[sel]


@dataclass
class SeedSet:
    """Sparsified matches feeding the interpolation stage.

    Motion seeds carry full scene flow vectors; geometry seeds carry a
    disparity only and are a superset of the motion seed pixels.
    """

    motion_xy: np.ndarray  # (M, 2) int64, (x, y)
    motion_vec: np.ndarray  # (M, 4)
    motion_err: np.ndarray  # (M,)
    geo_xy: np.ndarray  # (G, 2) int64
    geo_d0: np.ndarray  # (G,)
    geo_err: np.ndarray  # (G,)


def sparsify(mask: np.ndarray, errors: np.ndarray, block: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """One winner pixel per 3x3 block, lowest consistency error first."""
    xs, ys = _block_winners(mask, errors, block=block)
    return xs, ys


def build_seeds(
    forward: MatchField,
    mask: np.ndarray,
    errors: np.ndarray,
    fill_mask: np.ndarray,
    sgm_disp: np.ndarray | None = None,
    block: int = 3,
) -> SeedSet:
    """Sparsify joint matches and geometry candidates into a SeedSet.

    Geometry candidates pool the joint matches with the disparity-fill
    pixels. Within a block, joint matches take precedence so that every
    motion seed pixel is also a geometry seed.
    """
    mx, my = _block_winners(mask, errors, block=block)

    geo_mask = mask | fill_mask
    geo_err = errors.copy()
    if sgm_disp is not None:
        d0 = forward.flow[:, :, 2]
        with np.errstate(invalid="ignore"):
            fill_err = np.abs(d0 - sgm_disp)
        geo_err = np.where(fill_mask, fill_err, geo_err)
    tiers = np.where(mask, 0, 1)
    gx, gy = _block_winners(geo_mask, geo_err, tiers=tiers, block=block)

    return SeedSet(
        motion_xy=np.column_stack([mx, my]),
        motion_vec=forward.flow[my, mx],
        motion_err=errors[my, mx],
        geo_xy=np.column_stack([gx, gy]),
        geo_d0=forward.flow[gy, gx, 2],
        geo_err=geo_err[gy, gx],
    )
