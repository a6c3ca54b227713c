"""Boundary-aware densification of sparse scene flow seeds.

Seeds are spread over the image by geodesic proximity: shortest-path
distances on the 4-connected pixel graph whose edge weights grow with
boundary strength, so seed influence does not leak across object
contours. Each pixel inherits local models fitted around its nearest
seed, a disparity plane for geometry and an affine 3D transformation
for motion, and the dense field is reconstructed by lifting the pixel
to 3D, applying the motion and reprojecting.

Distances are exact shortest-path sums, not grid approximations. The
per-seed neighbor search reuses one Dijkstra pass per seed, stopped as
soon as the requested number of other seeds is settled, which touches
only a local patch of the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .fields import new_field
from .filtering import SeedSet
from .geometry import CameraRig, backproject

EDGE_BASE_COST = 0.001  # keeps distances defined on zero edge maps


# -- shortest paths -----------------------------------------------------------
#
# Binary min-heap on parallel arrays, ordered by (distance, tag). The tag
# carries the seed id in the labeling pass so that equal-distance pixels
# settle with the smallest seed id.


@njit(cache=True)
def _heap_push(hd, ht, hp, size, d, t, p):
    hd[size] = d
    ht[size] = t
    hp[size] = p
    j = size
    while j > 0:
        up = (j - 1) // 2
        if hd[up] > hd[j] or (hd[up] == hd[j] and ht[up] > ht[j]):
            hd[up], hd[j] = hd[j], hd[up]
            ht[up], ht[j] = ht[j], ht[up]
            hp[up], hp[j] = hp[j], hp[up]
            j = up
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(hd, ht, hp, size):
    d, t, p = hd[0], ht[0], hp[0]
    size -= 1
    hd[0], ht[0], hp[0] = hd[size], ht[size], hp[size]
    j = 0
    while True:
        lo = 2 * j + 1
        if lo >= size:
            break
        if lo + 1 < size and (
            hd[lo + 1] < hd[lo] or (hd[lo + 1] == hd[lo] and ht[lo + 1] < ht[lo])
        ):
            lo += 1
        if hd[lo] < hd[j] or (hd[lo] == hd[j] and ht[lo] < ht[j]):
            hd[lo], hd[j] = hd[j], hd[lo]
            ht[lo], ht[j] = ht[j], ht[lo]
            hp[lo], hp[j] = hp[j], hp[lo]
            j = lo
        else:
            break
    return size, d, t, p


@njit(cache=True)
def _label_pixels(bmap, sx, sy, nu):
    h, w = bmap.shape
    hw = h * w
    n = sx.size
    dist = np.full(hw, np.inf)
    label = np.full(hw, -1, np.int64)
    done = np.zeros(hw, np.uint8)
    best = np.full(hw, np.inf)
    bestt = np.full(hw, n, np.int64)
    cap = 4 * hw + n + 4
    hd = np.empty(cap)
    ht = np.empty(cap, np.int64)
    hp = np.empty(cap, np.int64)
    size = 0
    for s in range(n):
        p = sy[s] * w + sx[s]
        if 0.0 < best[p] or (best[p] == 0.0 and s < bestt[p]):
            best[p] = 0.0
            bestt[p] = s
            size = _heap_push(hd, ht, hp, size, 0.0, s, p)
    while size > 0:
        size, d, t, p = _heap_pop(hd, ht, hp, size)
        if done[p]:
            continue
        done[p] = 1
        dist[p] = d
        label[p] = t
        py = p // w
        px = p - py * w
        for k in range(4):
            if k == 0:
                qy, qx = py - 1, px
            elif k == 1:
                qy, qx = py + 1, px
            elif k == 2:
                qy, qx = py, px - 1
            else:
                qy, qx = py, px + 1
            if qy < 0 or qy >= h or qx < 0 or qx >= w:
                continue
            q = qy * w + qx
            if done[q]:
                continue
            nd = d + (0.5 * (bmap[py, px] + bmap[qy, qx]) + nu)
            if nd < best[q] or (nd == best[q] and t < bestt[q]):
                best[q] = nd
                bestt[q] = t
                size = _heap_push(hd, ht, hp, size, nd, t, q)
    return dist.reshape(h, w), label.reshape(h, w)


@njit(cache=True)
def _seed_neighbors(bmap, sx, sy, n_neighbors, nu):
    h, w = bmap.shape
    hw = h * w
    n = sx.size
    nbr_id = np.full((n, n_neighbors), -1, np.int64)
    nbr_d = np.full((n, n_neighbors), np.inf)
    counts = np.zeros(n, np.int64)
    if n_neighbors == 0:
        return nbr_id, nbr_d, counts
    seed_at = np.full(hw, -1, np.int64)
    for s in range(n):
        seed_at[sy[s] * w + sx[s]] = s
    best = np.empty(hw)
    stamp = np.full(hw, -1, np.int64)
    done = np.full(hw, -1, np.int64)
    cap = 4 * hw + 4
    hd = np.empty(cap)
    ht = np.empty(cap, np.int64)
    hp = np.empty(cap, np.int64)
    coll_d = np.empty(n)
    coll_i = np.empty(n, np.int64)
    for s in range(n):
        size = 0
        p0 = sy[s] * w + sx[s]
        best[p0] = 0.0
        stamp[p0] = s
        size = _heap_push(hd, ht, hp, size, 0.0, 0, p0)
        m = 0
        while size > 0:
            size, d, _, p = _heap_pop(hd, ht, hp, size)
            if done[p] == s:
                continue
            # collected distances are nondecreasing: once the required
            # count is reached, anything strictly farther is irrelevant
            if m >= n_neighbors and d > coll_d[n_neighbors - 1]:
                break
            done[p] = s
            sid = seed_at[p]
            if sid >= 0 and sid != s:
                coll_d[m] = d
                coll_i[m] = sid
                m += 1
            py = p // w
            px = p - py * w
            for k in range(4):
                if k == 0:
                    qy, qx = py - 1, px
                elif k == 1:
                    qy, qx = py + 1, px
                elif k == 2:
                    qy, qx = py, px - 1
                else:
                    qy, qx = py, px + 1
                if qy < 0 or qy >= h or qx < 0 or qx >= w:
                    continue
                q = qy * w + qx
                if done[q] == s:
                    continue
                nd = d + (0.5 * (bmap[py, px] + bmap[qy, qx]) + nu)
                if stamp[q] != s or nd < best[q]:
                    best[q] = nd
                    stamp[q] = s
                    size = _heap_push(hd, ht, hp, size, nd, 0, q)
        # order ties by seed id, then keep the closest n_neighbors
        for a in range(1, m):
            da, ia = coll_d[a], coll_i[a]
            b = a - 1
            while b >= 0 and (coll_d[b] > da or (coll_d[b] == da and coll_i[b] > ia)):
                coll_d[b + 1] = coll_d[b]
                coll_i[b + 1] = coll_i[b]
                b -= 1
            coll_d[b + 1] = da
            coll_i[b + 1] = ia
        take = min(m, n_neighbors)
        for a in range(take):
            nbr_id[s, a] = coll_i[a]
            nbr_d[s, a] = coll_d[a]
        counts[s] = take
    return nbr_id, nbr_d, counts


@dataclass
class GeodesicLabeling:
    """Nearest-seed assignment plus per-seed neighbor lists.

    `neighbor_ids` rows are padded with -1 beyond `neighbor_counts`;
    distances pad with infinity. Lists are sorted by (distance, id) and
    never include the seed itself.
    """

    seeds: np.ndarray  # (S, 2) int64, (x, y)
    label: np.ndarray  # (H, W) int64
    distance: np.ndarray  # (H, W) float64
    neighbor_ids: np.ndarray  # (S, K) int64
    neighbor_dists: np.ndarray  # (S, K) float64
    neighbor_counts: np.ndarray  # (S,) int64


def geodesic_labeling(
    seeds: np.ndarray,
    boundaries: np.ndarray,
    n_neighbors: int,
    nu: float = EDGE_BASE_COST,
) -> GeodesicLabeling:
    """Label every pixel with its geodesically nearest seed.

    Also collects, for each seed, its n_neighbors nearest other seeds
    with exact shortest-path distances. Equal distances resolve toward
    the smaller seed id.
    """
    seeds = np.ascontiguousarray(np.asarray(seeds, dtype=np.int64))
    if seeds.ndim != 2 or seeds.shape[1] != 2 or seeds.shape[0] == 0:
        raise ValueError("need a nonempty (S, 2) array of seed pixels")
    bmap = np.ascontiguousarray(np.asarray(boundaries, dtype=np.float64))
    h, w = bmap.shape
    sx, sy = seeds[:, 0].copy(), seeds[:, 1].copy()
    if sx.min() < 0 or sx.max() >= w or sy.min() < 0 or sy.max() >= h:
        raise ValueError("seed pixels outside the image")
    dist, label = _label_pixels(bmap, sx, sy, nu)
    nbr_id, nbr_d, counts = _seed_neighbors(bmap, sx, sy, int(n_neighbors), nu)
    return GeodesicLabeling(seeds, label, dist, nbr_id, nbr_d, counts)


# -- local models -------------------------------------------------------------


@dataclass(frozen=True)
class PlaneModel:
    """Disparity plane d(x, y) = a1 x + a2 y + a3."""

    a1: float
    a2: float
    a3: float
    degenerate: bool = False

    def disparity(self, x, y):
        return self.a1 * np.asarray(x) + self.a2 * np.asarray(y) + self.a3


@dataclass(frozen=True)
class AffineMotion:
    """Affine 3D map x1 = A x0 + t, in camera-frame meters."""

    matrix: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)
    degenerate: bool = False

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ np.asarray(self.matrix).T + np.asarray(self.translation)


_RANK_TOL = 1e-10  # relative eigenvalue cutoff for normal equations


def _solve_planes(x, y, d, wgt):
    """Batched weighted plane fits via 3x3 normal equations.

    All inputs are (S, K); padded entries carry zero weight. The system
    is solved in coordinates centered on the weighted seed mean, which
    keeps the degeneracy test a pure scatter-rank check. Returns (S, 3)
    coefficients and an (S,) degeneracy flag; degenerate cells fall
    back to the fronto-parallel plane at the weighted mean d.
    """
    wsum = wgt.sum(axis=1)
    xb = (wgt * x).sum(axis=1) / wsum
    yb = (wgt * y).sum(axis=1) / wsum
    xc = x - xb[:, None]
    yc = y - yb[:, None]
    g = np.stack([xc, yc, np.ones_like(x)], axis=-1)  # (S, K, 3)
    gw = g * wgt[..., None]
    m = np.einsum("ski,skj->sij", gw, g)
    rhs = np.einsum("ski,sk->si", gw, d)
    ev = np.linalg.eigvalsh(m)
    bad = ev[:, 0] < _RANK_TOL * np.maximum(ev[:, -1], 1.0)
    coef = np.empty((x.shape[0], 3))
    if np.any(~bad):
        sol = np.linalg.solve(m[~bad], rhs[~bad][..., None])[..., 0]
        coef[~bad, 0] = sol[:, 0]
        coef[~bad, 1] = sol[:, 1]
        coef[~bad, 2] = sol[:, 2] - sol[:, 0] * xb[~bad] - sol[:, 1] * yb[~bad]
    if np.any(bad):
        mean = (wgt[bad] * d[bad]).sum(axis=1) / wsum[bad]
        coef[bad] = 0.0
        coef[bad, 2] = mean
    return coef, bad


def _solve_affine(x0, x1, wgt):
    """Batched weighted affine fits via 4x4 normal equations.

    x0, x1 are (S, K, 3); returns (S, 3, 3) matrices, (S, 3)
    translations and a degeneracy flag. Degenerate cells fall back to
    the best-fit pure translation.
    """
    s, k = wgt.shape
    wsum = wgt.sum(axis=1)
    ctr = (wgt[..., None] * x0).sum(axis=1) / wsum[:, None]  # (S, 3)
    x0c = x0 - ctr[:, None, :]
    g = np.concatenate([x0c, np.ones((s, k, 1))], axis=-1)  # (S, K, 4)
    gw = g * wgt[..., None]
    m = np.einsum("ski,skj->sij", gw, g)
    rhs = np.einsum("ski,skj->sij", gw, x1)  # (S, 4, 3)
    ev = np.linalg.eigvalsh(m)
    scale = np.maximum(ev[:, -1], 1.0)
    rank = (ev >= _RANK_TOL * scale[:, None]).sum(axis=1)
    full = rank == 4
    # coplanar cells keep a least-squares motion: the minimum-norm
    # solution reproduces consistent pairs on the data plane, and the
    # reconstruction never queries the motion far off that plane
    plane = rank == 3
    bad = rank < 3
    mat = np.empty((s, 3, 3))
    trans = np.empty((s, 3))
    if np.any(full):
        sol = np.linalg.solve(m[full], rhs[full])  # (., 4, 3)
        a = np.swapaxes(sol[:, :3, :], 1, 2)
        mat[full] = a
        trans[full] = sol[:, 3, :] - np.einsum("nij,nj->ni", a, ctr[full])
    if np.any(plane):
        sol = np.linalg.pinv(m[plane], rcond=1e-9) @ rhs[plane]
        a = np.swapaxes(sol[:, :3, :], 1, 2)
        mat[plane] = a
        trans[plane] = sol[:, 3, :] - np.einsum("nij,nj->ni", a, ctr[plane])
    if np.any(bad):
        delta = (wgt[bad, :, None] * (x1[bad] - x0[bad])).sum(axis=1) / wsum[bad, None]
        mat[bad] = np.eye(3)
        trans[bad] = delta
    return mat, trans, bad


def fit_plane(xy: np.ndarray, d0: np.ndarray, weights: np.ndarray) -> PlaneModel:
    """Weighted least-squares disparity plane through sparse seeds."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    d0 = np.asarray(d0, dtype=np.float64).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if xy.shape[0] == 0 or xy.shape[0] != d0.size or d0.size != w.size:
        raise ValueError("need matching nonempty seed arrays")
    if not np.all(w >= 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")
    coef, bad = _solve_planes(xy[None, :, 0], xy[None, :, 1], d0[None], w[None])
    return PlaneModel(coef[0, 0], coef[0, 1], coef[0, 2], bool(bad[0]))


def fit_affine(x0: np.ndarray, x1: np.ndarray, weights: np.ndarray) -> AffineMotion:
    """Weighted least-squares affine 3D motion from point pairs."""
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1, 3)
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 3)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if x0.shape[0] == 0 or x0.shape != x1.shape or x0.shape[0] != w.size:
        raise ValueError("need matching nonempty point pair arrays")
    if not np.all(w >= 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")
    mat, trans, bad = _solve_affine(x0[None], x1[None], w[None])
    return AffineMotion(mat[0], trans[0], bool(bad[0]))


def neighbor_weights(dists: np.ndarray, alpha: float = 2.2) -> np.ndarray:
    """Gaussian-kernel seed weights exp(-alpha * D)."""
    return np.exp(-alpha * np.asarray(dists, dtype=np.float64))


# -- dense reconstruction -----------------------------------------------------


def _gather_members(labeling: GeodesicLabeling, alpha: float):
    """Stack each seed cell with its neighbors, weight-padded.

    Returns (S, K+1) member indices and weights; padded slots repeat the
    seed itself with zero weight so they drop out of the fits.
    """
    s, k = labeling.neighbor_ids.shape
    own = np.arange(s, dtype=np.int64)
    members = np.concatenate([own[:, None], labeling.neighbor_ids], axis=1)
    dists = np.concatenate([np.zeros((s, 1)), labeling.neighbor_dists], axis=1)
    pad = members < 0
    members = np.where(pad, own[:, None], members)
    weights = np.where(pad, 0.0, neighbor_weights(dists, alpha))
    return members, weights


def interpolate(
    seeds: SeedSet,
    boundaries: np.ndarray,
    rig: CameraRig,
    geometry_neighborhood: int = 160,
    motion_neighborhood: int = 80,
    alpha: float = 2.2,
) -> np.ndarray:
    """Densify a SeedSet into a full scene flow field.

    Per pixel: disparity from the plane model of its geometry cell, then
    a lift to 3D, the affine motion of its motion cell, and projection
    back to (u, v, d1). Pixels whose plane gives non-positive disparity
    or whose moved point falls behind the camera become invalid.
    """
    if seeds.geo_xy.shape[0] == 0 or seeds.motion_xy.shape[0] == 0:
        raise ValueError("interpolation needs geometry and motion seeds")
    bmap = np.asarray(boundaries, dtype=np.float64)
    h, w = bmap.shape

    glab = geodesic_labeling(seeds.geo_xy, bmap, geometry_neighborhood - 1)
    mlab = geodesic_labeling(seeds.motion_xy, bmap, motion_neighborhood - 1)

    gm, gw = _gather_members(glab, alpha)
    coef, _ = _solve_planes(
        seeds.geo_xy[gm, 0].astype(np.float64),
        seeds.geo_xy[gm, 1].astype(np.float64),
        seeds.geo_d0[gm],
        gw,
    )

    mm, mw = _gather_members(mlab, alpha)
    mx = seeds.motion_xy[mm, 0].astype(np.float64)
    my = seeds.motion_xy[mm, 1].astype(np.float64)
    vec = seeds.motion_vec[mm]  # (S, K+1, 4)
    p0 = backproject(mx, my, vec[..., 2], rig)
    p1 = backproject(mx + vec[..., 0], my + vec[..., 1], vec[..., 3], rig)
    mat, trans, _ = _solve_affine(p0, p1, mw)

    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    c = coef[glab.label]  # (H, W, 3)
    d0 = c[:, :, 0] * xs + c[:, :, 1] * ys + c[:, :, 2]
    ok = d0 > 0

    field = new_field(h, w)
    if not np.any(ok):
        return field
    pt0 = backproject(xs[ok], ys[ok], d0[ok], rig)
    a = mat[mlab.label[ok]]
    t = trans[mlab.label[ok]]
    pt1 = np.einsum("nij,nj->ni", a, pt0) + t
    z1 = pt1[:, 2]
    good = z1 > 0
    zs = np.where(good, z1, 1.0)
    u = np.where(good, rig.f * pt1[:, 0] / zs + rig.cx - xs[ok], np.nan)
    v = np.where(good, rig.f * pt1[:, 1] / zs + rig.cy - ys[ok], np.nan)
    d1 = np.where(good, rig.f * rig.baseline / zs, np.nan)
    block = np.stack([u, v, np.where(good, d0[ok], np.nan), d1], axis=-1)
    field[ok] = block
    return field
