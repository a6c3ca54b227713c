"""Semi-global stereo matching used to validate disparity seeds.

Pixelwise costs are Hamming distances of 5x5 census transforms, scaled
to a 0-255 range, and aggregated along 8 scanline directions with the
usual small/large jump penalties P1 and P2. Winner-takes-all disparities
must survive a uniqueness margin and a left-right comparison; survivors
get sub-pixel refinement by fitting a parabola through the aggregated
costs around the winner.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .image import to_gray

_CENSUS_BITS = 24  # 5x5 neighborhood without the center
_COST_SCALE = 255.0 / _CENSUS_BITS


def _census(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.uint32)
    bit = np.uint32(0)
    ys = np.arange(h)
    xs = np.arange(w)
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            if dy == 0 and dx == 0:
                continue
            ny = np.clip(ys + dy, 0, h - 1)
            nx = np.clip(xs + dx, 0, w - 1)
            darker = img[ny][:, nx] < img
            out |= darker.astype(np.uint32) << np.uint32(bit)
            bit += np.uint32(1)
    return out


def _cost_volume(census_l: np.ndarray, census_r: np.ndarray, d_max: int) -> np.ndarray:
    # right coordinate clamped at the border so constant images keep a
    # uniformly zero volume (and therefore fail the uniqueness margin)
    h, w = census_l.shape
    vol = np.empty((h, w, d_max + 1), dtype=np.float32)
    xs = np.arange(w)
    for d in range(d_max + 1):
        xr = np.clip(xs - d, 0, w - 1)
        ham = np.bitwise_count(census_l ^ census_r[:, xr])
        vol[:, :, d] = ham.astype(np.float32) * _COST_SCALE
    return vol


@njit(cache=True)
def _aggregate(cost, p1, p2):
    h, w, nd = cost.shape
    agg = np.zeros((h, w, nd), dtype=np.float32)
    lbuf = np.empty((h, w, nd), dtype=np.float32)
    dirs = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))
    for k in range(8):
        dy, dx = dirs[k]
        for yi in range(h):
            y = yi if dy >= 0 else h - 1 - yi
            for xi in range(w):
                x = xi if dx >= 0 else w - 1 - xi
                py = y - dy
                px = x - dx
                if py < 0 or py >= h or px < 0 or px >= w:
                    for d in range(nd):
                        lbuf[y, x, d] = cost[y, x, d]
                else:
                    minprev = lbuf[py, px, 0]
                    for d in range(1, nd):
                        if lbuf[py, px, d] < minprev:
                            minprev = lbuf[py, px, d]
                    for d in range(nd):
                        best = lbuf[py, px, d]
                        if d > 0 and lbuf[py, px, d - 1] + p1 < best:
                            best = lbuf[py, px, d - 1] + p1
                        if d < nd - 1 and lbuf[py, px, d + 1] + p1 < best:
                            best = lbuf[py, px, d + 1] + p1
                        if minprev + p2 < best:
                            best = minprev + p2
                        lbuf[y, x, d] = cost[y, x, d] + best - minprev
        agg += lbuf
    return agg


def _wta(agg: np.ndarray, uniqueness: float) -> tuple[np.ndarray, np.ndarray]:
    # winner-takes-all with a relative uniqueness margin; returns (disp, ok)
    best = np.argmin(agg, axis=2)
    h, w, nd = agg.shape
    iy, ix = np.mgrid[0:h, 0:w]
    c1 = agg[iy, ix, best]
    masked = agg.copy()
    for off in (-1, 0, 1):
        d = np.clip(best + off, 0, nd - 1)
        masked[iy, ix, d] = np.inf
    c2 = masked.min(axis=2)
    ok = c2 * (1.0 - uniqueness) > c1
    return best, ok


def _subpixel(agg: np.ndarray, disp: np.ndarray) -> np.ndarray:
    h, w, nd = agg.shape
    iy, ix = np.mgrid[0:h, 0:w]
    d = np.clip(disp, 1, nd - 2)
    c0 = agg[iy, ix, d]
    cm = agg[iy, ix, d - 1]
    cp = agg[iy, ix, d + 1]
    denom = cm + cp - 2.0 * c0
    offset = np.where(denom > 1e-9, (cm - cp) / np.maximum(2.0 * denom, 1e-9), 0.0)
    offset = np.clip(offset, -0.5, 0.5)
    # only interior winners move off the integer grid
    refined = np.where((disp >= 1) & (disp <= nd - 2), disp + offset, disp.astype(np.float64))
    return refined


def sgm_disparity_pair(
    left: np.ndarray,
    right: np.ndarray,
    max_disparity: int = 128,
    p1: float = 10.0,
    p2: float = 120.0,
    lr_tolerance: float = 1.0,
    uniqueness: float = 0.05,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run SGM and return (left disparity, validity, right disparity).

    The right disparity map reuses the left cost volume (cost of right
    pixel x at disparity d equals cost of left pixel x + d) but is
    aggregated independently.
    """
    gl = to_gray(np.asarray(left, dtype=np.float64))
    gr = to_gray(np.asarray(right, dtype=np.float64))
    if gl.shape != gr.shape:
        raise ValueError("stereo pair must share one shape")
    h, w = gl.shape
    d_max = int(min(max_disparity, w - 1))
    vol_l = _cost_volume(_census(gl), _census(gr), d_max)
    # right volume reuses left costs: right x at disparity d <-> left x + d
    vol_r = np.empty_like(vol_l)
    for d in range(d_max + 1):
        vol_r[:, : w - d, d] = vol_l[:, d:, d]
        vol_r[:, w - d :, d] = vol_l[:, w - 1 :, d]
    agg_l = _aggregate(vol_l, np.float32(p1), np.float32(p2))
    agg_r = _aggregate(vol_r, np.float32(p1), np.float32(p2))

    dl, ok_l = _wta(agg_l, uniqueness)
    dr, ok_r = _wta(agg_r, uniqueness)

    xs = np.arange(w)[None, :].repeat(h, axis=0)
    xr = xs - dl
    in_range = xr >= 0
    xr_c = np.clip(xr, 0, w - 1)
    iy = np.arange(h)[:, None].repeat(w, axis=1)
    lr_ok = np.abs(dl - dr[iy, xr_c]) <= lr_tolerance
    valid = ok_l & in_range & lr_ok & ok_r[iy, xr_c]

    disp = _subpixel(agg_l, dl)
    disp_l = np.where(valid, disp, np.nan)
    disp_r = np.where(ok_r, _subpixel(agg_r, dr), np.nan)
    return disp_l, valid, disp_r


def sgm_disparity(
    left: np.ndarray,
    right: np.ndarray,
    max_disparity: int = 128,
    p1: float = 10.0,
    p2: float = 120.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Left disparity map with validity mask (NaN outside the mask)."""
    disp, valid, _ = sgm_disparity_pair(left, right, max_disparity, p1, p2)
    return disp, valid
