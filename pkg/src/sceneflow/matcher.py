"""Sparse-to-start stochastic matching of scene flow vectors.

A scene flow vector (u, v, d0, d1) for a reference pixel p in the left
image at time 0 defines three correspondences: p + (u, v) in the left
image at time 1, p + (-d0, 0) in the right image at time 0 and
p + (u - d1, v) in the right image at time 1. The matching cost of a
vector sums, over a 7x7 window around p sampled with the scale stride,
the Euclidean feature distances of all three correspondences; displaced
sample positions are rounded to the nearest pixel and replicate padding
applies at the borders.

Search runs coarse to fine over the smoothing pyramid. The coarsest
level is seeded from kD-tree candidates; every level then alternates
quadrant-ordered propagation sweeps with a per-pixel random search.
Both only ever replace a vector when its cost strictly decreases, so
per-pixel costs are non-increasing throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .features import sift_pca_features, wht_descriptors
from .image import to_gray
from .kdtree import EpipolarForest, KdTree
from .pyramid import ScalePyramid, build_scale_pyramid

_WIN = 3  # window radius; 7x7 samples


@dataclass
class MatchField:
    """Scene flow estimates on a stride-spaced pixel grid.

    Grid cell (i, j) corresponds to image pixel (j * stride, i * stride).
    Invalid cells hold NaN vectors and infinite cost; valid cells store
    the matching cost of their vector at this stride.
    """

    flow: np.ndarray  # (Hs, Ws, 4) float64
    cost: np.ndarray  # (Hs, Ws) float64
    stride: int
    image_shape: tuple[int, int]  # (H, W) of the underlying pixel grid


# -- cost kernels ------------------------------------------------------------


@njit(cache=True)
def _pair_cost(fa, fb, px, py, dx, dy, stride):
    h, w = fa.shape[0], fa.shape[1]
    c = fa.shape[2]
    total = 0.0
    for wy in range(-_WIN, _WIN + 1):
        by = py + wy * stride
        ay = min(max(by, 0), h - 1)
        qy = int(math.floor(by + dy + 0.5))
        qy = min(max(qy, 0), h - 1)
        for wx in range(-_WIN, _WIN + 1):
            bx = px + wx * stride
            ax = min(max(bx, 0), w - 1)
            qx = int(math.floor(bx + dx + 0.5))
            qx = min(max(qx, 0), w - 1)
            s = 0.0
            for ch in range(c):
                diff = fa[ay, ax, ch] - fb[qy, qx, ch]
                s += diff * diff
            total += math.sqrt(s)
    return total


@njit(cache=True)
def _vector_cost(f0, f1, f2, f3, px, py, u, v, d0, d1, stride):
    c = _pair_cost(f0, f1, px, py, u, v, stride)
    c += _pair_cost(f0, f2, px, py, -d0, 0.0, stride)
    c += _pair_cost(f0, f3, px, py, u - d1, v, stride)
    return c


@njit(cache=True)
def _sweep(flow, cost, f0, f1, f2, f3, stride, quadrant):
    hs, ws = cost.shape
    di = 1 if quadrant in (0, 2) else -1
    dj = 1 if quadrant in (0, 3) else -1
    i0 = 0 if di == 1 else hs - 1
    j0 = 0 if dj == 1 else ws - 1
    for ii in range(hs):
        i = i0 + di * ii
        py = i * stride
        for jj in range(ws):
            j = j0 + dj * jj
            px = j * stride
            for n in range(2):
                ni = i - di if n == 0 else i
                nj = j if n == 0 else j - dj
                if ni < 0 or ni >= hs or nj < 0 or nj >= ws:
                    continue
                if not np.isfinite(cost[ni, nj]):
                    continue
                u, v = flow[ni, nj, 0], flow[ni, nj, 1]
                d0, d1 = flow[ni, nj, 2], flow[ni, nj, 3]
                c = _vector_cost(f0, f1, f2, f3, px, py, u, v, d0, d1, stride)
                if c < cost[i, j]:
                    cost[i, j] = c
                    flow[i, j, 0] = u
                    flow[i, j, 1] = v
                    flow[i, j, 2] = d0
                    flow[i, j, 3] = d1


@njit(cache=True)
def _search(flow, cost, f0, f1, f2, f3, stride, offsets):
    hs, ws = cost.shape
    for i in range(hs):
        py = i * stride
        for j in range(ws):
            if not np.isfinite(cost[i, j]):
                continue
            u = flow[i, j, 0] + offsets[i, j, 0]
            v = flow[i, j, 1] + offsets[i, j, 1]
            d0 = flow[i, j, 2] + offsets[i, j, 2]
            d1 = flow[i, j, 3] + offsets[i, j, 3]
            if d0 <= 0.0 or d1 <= 0.0:
                continue
            c = _vector_cost(f0, f1, f2, f3, j * stride, py, u, v, d0, d1, stride)
            if c < cost[i, j]:
                cost[i, j] = c
                flow[i, j, 0] = u
                flow[i, j, 1] = v
                flow[i, j, 2] = d0
                flow[i, j, 3] = d1


@njit(cache=True)
def _recompute(flow, cost, f0, f1, f2, f3, stride):
    hs, ws = cost.shape
    for i in range(hs):
        for j in range(ws):
            if np.isnan(flow[i, j, 0]):
                cost[i, j] = np.inf
            else:
                cost[i, j] = _vector_cost(
                    f0,
                    f1,
                    f2,
                    f3,
                    j * stride,
                    i * stride,
                    flow[i, j, 0],
                    flow[i, j, 1],
                    flow[i, j, 2],
                    flow[i, j, 3],
                    stride,
                )


# -- public cost entry -------------------------------------------------------


def _as_feature(arr: np.ndarray) -> np.ndarray:
    f = np.asarray(arr, dtype=np.float32)
    if f.ndim == 2:
        f = f[:, :, None]
    if f.ndim != 3:
        raise ValueError(f"feature maps must be (H, W) or (H, W, C), got {arr.shape}")
    return np.ascontiguousarray(f)


def matching_cost(
    vector: np.ndarray,
    x: int,
    y: int,
    features: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    stride: int = 1,
) -> float:
    """Window matching cost of one scene flow vector at pixel (x, y).

    `features` holds the maps of (reference, temporal partner, stereo
    partner, cross image) at the evaluation scale. Always returns a
    finite non-negative value for finite vectors.
    """
    vec = np.asarray(vector, dtype=np.float64).reshape(4)
    if not np.all(np.isfinite(vec)):
        raise ValueError("matching cost requires finite vector components")
    f0, f1, f2, f3 = (_as_feature(f) for f in features)
    if not (f0.shape == f1.shape == f2.shape == f3.shape):
        raise ValueError("feature maps must share one shape")
    return float(
        _vector_cost(f0, f1, f2, f3, int(x), int(y), vec[0], vec[1], vec[2], vec[3], int(stride))
    )


def recompute_costs(
    field: MatchField,
    features: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
) -> None:
    """Refresh the stored costs of all vectors at the field's stride."""
    f0, f1, f2, f3 = (_as_feature(f) for f in features)
    _recompute(field.flow, field.cost, f0, f1, f2, f3, field.stride)


# -- kD-tree initialization --------------------------------------------------


@dataclass
class KdForest:
    """Search trees over WHT descriptors of the coarsest sample grid."""

    grid_x: np.ndarray  # (N,) full-resolution x of grid pixels
    grid_y: np.ndarray  # (N,)
    ref_desc: np.ndarray  # (N, n_coeff) descriptors of the reference image
    temporal: KdTree
    stereo: EpipolarForest
    cross: EpipolarForest
    stride: int


def build_kd_forest(
    images: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    stride: int,
    leaf_size: int = 8,
    patch: int = 8,
    n_coeff: int = 16,
) -> KdForest:
    """Build the three candidate trees on the stride-spaced sample grid.

    The temporal tree is unconstrained; the trees over the two right
    images respect the epipolar constraint and only ever answer with
    candidates on the query row.
    """
    ref, temporal, stereo, cross = (to_gray(np.asarray(im)) for im in images)
    h, w = ref.shape
    ys, xs = np.mgrid[0:h:stride, 0:w:stride]
    pixels = np.column_stack([xs.ravel(), ys.ravel()])
    descs = [
        wht_descriptors(im, pixels, patch=patch, n_coeff=n_coeff, stride=stride)
        for im in (ref, temporal, stereo, cross)
    ]
    return KdForest(
        grid_x=pixels[:, 0].astype(np.float64),
        grid_y=pixels[:, 1].astype(np.float64),
        ref_desc=descs[0],
        temporal=KdTree(descs[1], leaf_size=leaf_size),
        stereo=EpipolarForest(pixels, descs[2], leaf_size=leaf_size),
        cross=EpipolarForest(pixels, descs[3], leaf_size=leaf_size),
        stride=stride,
    )


def kdtree_init(
    forest: KdForest,
    features: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    image_shape: tuple[int, int],
) -> MatchField:
    """Initialize the coarsest-level field from tree candidate pools.

    Stereo candidates provide d0, temporal candidates (u, v) and cross
    candidates d1 through the u - d1 column offset; the combination with
    the lowest matching cost wins. Grid pixels without any positive
    disparity combination stay invalid and are left to propagation.
    """
    f0, f1, f2, f3 = (_as_feature(f) for f in features)
    stride = forest.stride
    h, w = image_shape
    hs = -(-h // stride)
    ws = -(-w // stride)
    flow = np.full((hs, ws, 4), np.nan)
    cost = np.full((hs, ws), np.inf)
    gx, gy = forest.grid_x, forest.grid_y
    for g in range(gx.size):
        x = gx[g]
        y = gy[g]
        q = forest.ref_desc[g]
        t_idx = forest.temporal.query(q)
        s_idx = forest.stereo.query(q, int(y))
        c_idx = forest.cross.query(q, int(y))

        d0s = x - gx[s_idx]
        d0s = d0s[d0s > 0]
        if d0s.size == 0 or t_idx.size == 0 or c_idx.size == 0:
            continue
        best_s = np.inf
        best_d0 = 0.0
        for d0 in d0s:
            c = _pair_cost(f0, f2, int(x), int(y), -d0, 0.0, stride)
            if c < best_s:
                best_s, best_d0 = c, d0

        best_tx = np.inf
        best_u = best_v = best_d1 = 0.0
        for ti in t_idx:
            u = gx[ti] - x
            v = gy[ti] - y
            ct = _pair_cost(f0, f1, int(x), int(y), u, v, stride)
            for ci in c_idx:
                d1 = x + u - gx[ci]
                if d1 <= 0:
                    continue
                cx = _pair_cost(f0, f3, int(x), int(y), u - d1, v, stride)
                if ct + cx < best_tx:
                    best_tx = ct + cx
                    best_u, best_v, best_d1 = u, v, d1
        if not np.isfinite(best_tx):
            continue
        i = int(y) // stride
        j = int(x) // stride
        flow[i, j] = (best_u, best_v, best_d0, best_d1)
        cost[i, j] = _vector_cost(
            f0, f1, f2, f3, int(x), int(y), best_u, best_v, best_d0, best_d1, stride
        )
    return MatchField(flow=flow, cost=cost, stride=stride, image_shape=(h, w))


# -- propagation and scales --------------------------------------------------


def propagate_and_search(
    field: MatchField,
    features: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    iterations: int,
    rng: np.random.Generator,
    first_quadrant: int = 0,
) -> None:
    """Run alternating propagation sweeps and random-search passes.

    Each iteration scans one image quadrant direction (cycled so all
    four directions are used equally) adopting either scan-preceding
    axis neighbor when its vector lowers the cost, then perturbs every
    pixel once with a uniform ]-stride, stride[ offset per component.
    Mutates the field in place; costs never increase.
    """
    f0, f1, f2, f3 = (_as_feature(f) for f in features)
    for it in range(iterations):
        _sweep(field.flow, field.cost, f0, f1, f2, f3, field.stride, (first_quadrant + it) % 4)
        offsets = rng.uniform(-1.0, 1.0, field.flow.shape) * field.stride
        _search(field.flow, field.cost, f0, f1, f2, f3, field.stride, offsets)


def upsample_field(
    field: MatchField,
    features: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
) -> MatchField:
    """Transport a field to the next finer grid (half the stride).

    Carried-over cells keep their vectors with costs re-evaluated at the
    finer scale; in-between cells start invalid and are filled by the
    following propagation sweeps.
    """
    if field.stride < 2:
        raise ValueError("field is already at full resolution")
    f0, f1, f2, f3 = (_as_feature(f) for f in features)
    stride = field.stride // 2
    h, w = field.image_shape
    hs = -(-h // stride)
    ws = -(-w // stride)
    flow = np.full((hs, ws, 4), np.nan)
    cost = np.full((hs, ws), np.inf)
    src = field.flow
    flow[:: 2, :: 2][: src.shape[0], : src.shape[1]] = src
    out = MatchField(flow=flow, cost=cost, stride=stride, image_shape=(h, w))
    _recompute(out.flow, out.cost, f0, f1, f2, f3, stride)
    return out


def match_dense(
    images: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    subscales: int = 3,
    iterations: int = 12,
    seed: int | None = 0,
    rng: np.random.Generator | None = None,
    leaf_size: int = 8,
    wht_patch: int = 8,
    wht_coeffs: int = 16,
    init_field: MatchField | None = None,
    features_by_level: list | None = None,
) -> MatchField:
    """Full coarse-to-fine matching for one image quadruple.

    Args:
        images: (reference, temporal partner, stereo partner, cross)
            in the reference frame's orientation.
        subscales: number of coarse levels above full resolution.
        iterations: propagation/search iterations per level.
        seed, rng: random stream for the search offsets; pass one.
        init_field: optional replacement for the tree initialization
            (used by tests); must live on the coarsest grid.
        features_by_level: optional per-level feature maps, index 0 at
            full resolution.

    Returns:
        the full-resolution MatchField.
    """
    grays = [to_gray(np.asarray(im, dtype=np.float64)) for im in images]
    h, w = grays[0].shape
    pyr: ScalePyramid = build_scale_pyramid(grays, subscales)
    if features_by_level is None:
        features_by_level = [sift_pca_features(level)[0] for level in pyr.levels]
    if rng is None:
        rng = np.random.default_rng(seed)

    field = init_field
    for level in range(subscales, -1, -1):
        stride = 2**level
        feats = features_by_level[level]
        if field is None:
            forest = build_kd_forest(
                pyr.levels[level], stride, leaf_size=leaf_size, patch=wht_patch, n_coeff=wht_coeffs
            )
            field = kdtree_init(forest, feats, (h, w))
        elif field.stride != stride:
            field = upsample_field(field, feats)
        propagate_and_search(field, feats, iterations, rng)
    return field


# -- the inverse matching problem --------------------------------------------


def inverse_images(
    reference: np.ndarray,
    temporal: np.ndarray,
    stereo: np.ndarray,
    cross: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Image quadruple of the time-reversed, view-swapped problem.

    The right image at time 1 becomes the reference. Mirroring all four
    images horizontally restores the standard sign convention in which
    the stereo partner sits at negative column offsets, so the same
    matcher runs unchanged on the returned quadruple.
    """
    flip = lambda im: np.ascontiguousarray(im[:, ::-1])
    return flip(cross), flip(stereo), flip(temporal), flip(reference)


def unflip_inverse_field(field: MatchField) -> MatchField:
    """Map a field matched on mirrored images back to the unmirrored frame.

    Only defined at full resolution. The horizontal flow component
    changes sign; disparities and vertical flow are mirror-invariant.
    """
    if field.stride != 1:
        raise ValueError("inverse fields are only unflipped at full resolution")
    flow = field.flow[:, ::-1].copy()
    flow[:, :, 0] = -flow[:, :, 0]
    return MatchField(
        flow=flow,
        cost=field.cost[:, ::-1].copy(),
        stride=1,
        image_shape=field.image_shape,
    )
