"""Camera pose from filtered matches and static-scene replacement.

The filtered matches give 2D-3D correspondences: a 3D point from the
reference disparity and its observed position in the next frame. A
minimal three-point solver inside RANSAC hypothesizes poses, a
Levenberg-Marquardt polish minimizes reprojection error, and a relaxed
second pass re-collects inliers. Outlier matches mark independently
moving objects; their labels are spread into a dense binary motion
mask with the same geodesic kernel used by the interpolator. Static
pixels then receive the exact scene flow induced by the camera motion,
which is typically far more accurate than matched flow on distant
ground and background.

The pose maps reference-frame points to the next camera frame:
X_next = R X + t.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from .geometry import CameraRig, RigidMotion, backproject, sceneflow_from_motion
from .interpolate import _gather_members, geodesic_labeling


class PoseEstimationError(RuntimeError):
    """Raised when no reliable camera pose can be found."""


# -- minimal solver -----------------------------------------------------------


def _p3p_grunert(points, bearings):
    """Camera-frame depths for three world points seen along unit rays.

    Classic three-point resection: law-of-cosines constraints reduce to
    a quartic in the depth ratio. Returns a list of (R, t) candidates
    with X_cam = R X + t.
    """
    p1, p2, p3 = points
    a = np.linalg.norm(p2 - p3)
    b = np.linalg.norm(p1 - p3)
    c = np.linalg.norm(p1 - p2)
    if min(a, b, c) < 1e-9:
        return []
    f1, f2, f3 = bearings
    cos_a = float(f2 @ f3)
    cos_b = float(f1 @ f3)
    cos_g = float(f1 @ f2)

    a2, b2, c2 = a * a, b * b, c * c
    ac = (a2 - c2) / b2
    # quartic coefficients in v = s3 / s1 (Grunert's reduction)
    a4 = (ac - 1.0) ** 2 - 4.0 * c2 / b2 * cos_a**2
    a3 = 4.0 * (
        ac * (1.0 - ac) * cos_b
        - (1.0 - (a2 + c2) / b2) * cos_a * cos_g
        + 2.0 * c2 / b2 * cos_a**2 * cos_b
    )
    a2_ = 2.0 * (
        ac**2
        - 1.0
        + 2.0 * ac**2 * cos_b**2
        + 2.0 * (b2 - c2) / b2 * cos_a**2
        - 4.0 * (a2 + c2) / b2 * cos_a * cos_b * cos_g
        + 2.0 * (b2 - a2) / b2 * cos_g**2
    )
    a1 = 4.0 * (
        -ac * (1.0 + ac) * cos_b
        + 2.0 * a2 / b2 * cos_g**2 * cos_b
        - (1.0 - (a2 + c2) / b2) * cos_a * cos_g
    )
    a0 = (1.0 + ac) ** 2 - 4.0 * a2 / b2 * cos_g**2

    coeffs = np.array([a4, a3, a2_, a1, a0])
    if not np.isfinite(coeffs).all() or abs(a4) < 1e-14:
        return []
    roots = np.roots(coeffs)
    out = []
    for v in roots:
        if abs(v.imag) > 1e-8 * max(1.0, abs(v.real)) or v.real <= 0:
            continue
        v = float(v.real)
        denom = 2.0 * (cos_g - v * cos_a)
        if abs(denom) < 1e-12:
            continue
        u = ((-1.0 + ac) * v * v - 2.0 * ac * cos_b * v + 1.0 + ac) / denom
        if u <= 0:
            continue
        s1sq = b2 / (1.0 + v * v - 2.0 * v * cos_b)
        if s1sq <= 0:
            continue
        s1 = np.sqrt(s1sq)
        cam = np.stack([s1 * f1, u * s1 * f2, v * s1 * f3])
        rt = _absolute_orientation(np.stack([p1, p2, p3]), cam)
        if rt is not None:
            out.append(rt)
    return out


def _absolute_orientation(src, dst):
    """Rigid transform with R src + t = dst in least squares."""
    sc = src.mean(axis=0)
    dc = dst.mean(axis=0)
    h = (src - sc).T @ (dst - dc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    if not np.isfinite(r).all():
        return None
    return r, dc - r @ sc


def _reproject_px(rot, t, points, rig):
    """Pixel positions of transformed points; NaN behind the camera."""
    q = points @ rot.T + t
    z = q[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = rig.f * q[:, 0] / z + rig.cx
        y = rig.f * q[:, 1] / z + rig.cy
    bad = z <= 1e-9
    x[bad] = np.nan
    y[bad] = np.nan
    return np.column_stack([x, y])


def _reproj_errors(rot, t, points, targets, rig):
    px = _reproject_px(rot, t, points, rig)
    err = np.linalg.norm(px - targets, axis=1)
    return np.where(np.isfinite(err), err, np.inf)


def _polish(rot, t, points, targets, rig):
    """Levenberg-Marquardt on reprojection error over (rotvec, t)."""

    def residuals(x):
        r = Rotation.from_rotvec(x[:3]).as_matrix()
        px = _reproject_px(r, x[3:], points, rig)
        res = (px - targets).ravel()
        return np.where(np.isfinite(res), res, 1e6)

    x0 = np.concatenate([Rotation.from_matrix(rot).as_rotvec(), t])
    fit = least_squares(residuals, x0, method="lm", max_nfev=200)
    return Rotation.from_rotvec(fit.x[:3]).as_matrix(), fit.x[3:]


def estimate_pose(
    xy: np.ndarray,
    vec: np.ndarray,
    rig: CameraRig,
    seed: int = 0,
    iterations: int = 500,
    inlier_px: float = 1.0,
    relaxed_px: float = 3.0,
    max_depth: float = 35.0,
    confidence: float = 0.99,
) -> tuple[RigidMotion, np.ndarray]:
    """Camera pose from sparse matches (x, y) with vectors (u, v, d0, d1).

    3D points come from the reference disparity, observations from the
    flow targets. Nearby points (depth <= max_depth) drive a seeded
    4-point RANSAC with an LM polish; a relaxed pass re-collects
    inliers and re-estimates. Returns the pose and a per-match flag
    that is true where the final reprojection error is within the
    relaxed threshold.

    Raises PoseEstimationError when fewer than 6 usable matches exist
    or no hypothesis gathers enough support.
    """
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    vec = np.asarray(vec, dtype=np.float64).reshape(-1, 4)
    n = xy.shape[0]
    ok = np.isfinite(xy).all(axis=1) & np.isfinite(vec).all(axis=1) & (vec[:, 2] > 0)

    # canonical ordering makes the result independent of input order
    order = np.lexsort((xy[:, 0], xy[:, 1]))
    order = order[ok[order]]
    depth = np.full(n, np.inf)
    depth[ok] = rig.f * rig.baseline / vec[ok, 2]
    fit_idx = order[depth[order] <= max_depth]
    if fit_idx.size < 6:
        raise PoseEstimationError(
            f"{fit_idx.size} usable matches within {max_depth} m; need at least 6"
        )

    pts = backproject(xy[fit_idx, 0], xy[fit_idx, 1], vec[fit_idx, 2], rig)
    targets = xy[fit_idx] + vec[fit_idx, :2]
    # rays of the observations in the next frame, where the moved points land
    bearings = np.column_stack(
        [
            (targets[:, 0] - rig.cx) / rig.f,
            (targets[:, 1] - rig.cy) / rig.f,
            np.ones(fit_idx.size),
        ]
    )
    bearings /= np.linalg.norm(bearings, axis=1, keepdims=True)

    rng = np.random.default_rng(seed)
    m = fit_idx.size
    best_count = 0
    best_rt = None
    for it in range(iterations):
        pick = rng.choice(m, 4, replace=False)
        cands = _p3p_grunert(pts[pick[:3]], bearings[pick[:3]])
        if not cands:
            continue
        probe = min(
            cands,
            key=lambda rt: _reproj_errors(rt[0], rt[1], pts[pick[3:]], targets[pick[3:]], rig)[0],
        )
        err = _reproj_errors(probe[0], probe[1], pts, targets, rig)
        count = int((err <= inlier_px).sum())
        if count > best_count:
            best_count = count
            best_rt = probe
            ratio = count / m
            if ratio >= 1.0:
                break
            needed = np.log(1.0 - confidence) / np.log(1.0 - ratio**4)
            if it + 1 >= needed:
                break
    if best_rt is None or best_count < 4:
        raise PoseEstimationError("no pose hypothesis gathered enough support")

    rot, t = best_rt
    stage1 = _reproj_errors(rot, t, pts, targets, rig) <= inlier_px
    if stage1.sum() >= 4:
        rot, t = _polish(rot, t, pts[stage1], targets[stage1], rig)
    stage2 = _reproj_errors(rot, t, pts, targets, rig) <= relaxed_px
    if stage2.sum() >= 4:
        rot, t = _polish(rot, t, pts[stage2], targets[stage2], rig)

    # orthonormalize against LM round-off before constructing the pose
    u, _, vt = np.linalg.svd(rot)
    rot = u @ np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt))]) @ vt
    pose = RigidMotion(rot, t)

    flags = np.zeros(n, dtype=bool)
    if np.any(ok):
        all_pts = backproject(xy[ok, 0], xy[ok, 1], vec[ok, 2], rig)
        all_targets = xy[ok] + vec[ok, :2]
        flags[ok] = _reproj_errors(rot, t, all_pts, all_targets, rig) <= relaxed_px
    return pose, flags


# -- dense segmentation -------------------------------------------------------


def segment_motion(
    seed_xy: np.ndarray,
    moving: np.ndarray,
    boundaries: np.ndarray,
    tau_s: float = 0.4,
    neighborhood: int = 80,
    alpha: float = 2.2,
) -> np.ndarray:
    """Spread binary seed labels into a dense moving-pixel mask.

    Every pixel takes the kernel-weighted mean of the labels in its
    geodesic cell's neighborhood and is moving iff that mean exceeds
    tau_s. Pixels whose neighborhood carries no weight stay static.
    """
    moving = np.asarray(moving, dtype=bool)
    lab = geodesic_labeling(seed_xy, boundaries, int(neighborhood) - 1)
    members, wgt = _gather_members(lab, alpha)
    num = (wgt * moving[members]).sum(axis=1)
    den = wgt.sum(axis=1)
    score = np.divide(num, den, out=np.zeros(den.shape), where=den > 0)
    return score[lab.label] > tau_s


def apply_egomotion(
    field: np.ndarray,
    moving_mask: np.ndarray,
    pose: RigidMotion,
    rig: CameraRig,
    diagnostics: dict | None = None,
) -> np.ndarray:
    """Overwrite static-pixel scene flow with the camera-induced flow.

    Static pixels need a valid reference disparity; pixels without one,
    or whose point leaves the camera frustum under the pose, keep their
    current vector and are counted in the diagnostics.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape[:2]
    out = field.copy()
    d0 = field[:, :, 2]
    with np.errstate(invalid="ignore"):
        usable = (~moving_mask) & np.isfinite(d0) & (d0 > 0)
    skipped = int((~moving_mask).sum() - usable.sum())
    if np.any(usable):
        ys, xs = np.nonzero(usable)
        uvd = sceneflow_from_motion(xs.astype(np.float64), ys.astype(np.float64), d0[usable], pose, rig)
        good = np.isfinite(uvd).all(axis=1)
        skipped += int((~good).sum())
        sel = usable.copy()
        sel[ys[~good], xs[~good]] = False
        out[sel, 0] = uvd[good, 0]
        out[sel, 1] = uvd[good, 1]
        out[sel, 3] = uvd[good, 2]
    if diagnostics is not None:
        diagnostics["static_pixels"] = int((~moving_mask).sum())
        diagnostics["static_skipped"] = skipped
    return out
