"""Pinhole stereo geometry for a rectified camera rig.

Conventions used throughout the package:

* pixel coordinates (x, y): x grows to the right (columns), y grows
  downward (rows); arrays are indexed [y, x]
* camera coordinates (X, Y, Z): X right, Y down, Z forward (optical axis)
* projection: x = f * X / Z + cx,  y = f * Y / Z + cy
* disparity: d = f * B / Z, always positive for visible points; the
  corresponding pixel in the right image sits at (x - d, y)

A scene flow vector (u, v, d0, d1) describes, for a reference pixel at
time 0 in the left image, the optical flow (u, v) into the left image at
time 1 and the disparities d0, d1 at the two times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CameraRig:
    """Intrinsics of a rectified stereo rig.

    f is the focal length in pixels (shared by both cameras), (cx, cy)
    the principal point and baseline the camera distance in meters.
    """

    f: float
    cx: float
    cy: float
    baseline: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.f) and self.f > 0):
            raise ValueError(f"focal length must be positive, got {self.f}")
        if not (np.isfinite(self.baseline) and self.baseline > 0):
            raise ValueError(f"baseline must be positive, got {self.baseline}")
        if not (np.isfinite(self.cx) and np.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    def depth_from_disparity(self, d: np.ndarray | float) -> np.ndarray | float:
        """Z = f * B / d for positive disparity d."""
        return self.f * self.baseline / d


@dataclass(frozen=True)
class RigidMotion:
    """Rigid transform X' = R @ X + t with a proper rotation R."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if not np.isclose(np.linalg.det(r), 1.0, atol=1e-9):
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidMotion":
        return RigidMotion(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (..., 3) array of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidMotion":
        return RigidMotion(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "RigidMotion") -> "RigidMotion":
        """Transform equivalent to applying `other` first, then self."""
        return RigidMotion(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


def project(points: np.ndarray, rig: CameraRig) -> np.ndarray:
    """Project camera-frame 3D points to (x, y, d) image coordinates.

    Args:
        points: (..., 3) array of points in the left camera frame.
        rig: rig intrinsics.

    Returns:
        (..., 3) array stacking pixel coordinates and disparity.

    Raises:
        ValueError: if any point has non-positive depth.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.shape[-1] != 3:
        raise ValueError(f"expected (..., 3) points, got shape {p.shape}")
    z = p[..., 2]
    if not np.all(z > 0):
        raise ValueError("cannot project points with non-positive depth")
    x = rig.f * p[..., 0] / z + rig.cx
    y = rig.f * p[..., 1] / z + rig.cy
    d = rig.f * rig.baseline / z
    return np.stack([x, y, d], axis=-1)


def backproject(
    x: np.ndarray | float,
    y: np.ndarray | float,
    d: np.ndarray | float,
    rig: CameraRig,
) -> np.ndarray:
    """Lift pixels with disparity back to 3D in the left camera frame.

    Inverse of :func:`project`; disparities must be strictly positive.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if not np.all(d > 0):
        raise ValueError("cannot backproject non-positive disparity")
    z = rig.f * rig.baseline / d
    out = np.empty(np.broadcast(x, y, d).shape + (3,), dtype=np.float64)
    out[..., 0] = (x - rig.cx) * z / rig.f
    out[..., 1] = (y - rig.cy) * z / rig.f
    out[..., 2] = z
    return out


def sceneflow_from_motion(
    x: np.ndarray | float,
    y: np.ndarray | float,
    d0: np.ndarray | float,
    motion: RigidMotion,
    rig: CameraRig,
) -> np.ndarray:
    """Scene flow induced by moving the backprojected pixels rigidly.

    Each pixel (x, y) with disparity d0 is lifted to 3D, transformed by
    `motion` and reprojected. The result stacks (u, v, d1) in the last
    axis. Points that end up behind the camera (Z <= 0 after the motion)
    cannot be reprojected and yield NaN entries instead.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p1 = motion.apply(backproject(x, y, d0, rig))
    z1 = p1[..., 2]
    ok = z1 > 0
    out = np.full(p1.shape, np.nan)
    zs = np.where(ok, z1, 1.0)
    out[..., 0] = np.where(ok, rig.f * p1[..., 0] / zs + rig.cx - x, np.nan)
    out[..., 1] = np.where(ok, rig.f * p1[..., 1] / zs + rig.cy - y, np.nan)
    out[..., 2] = np.where(ok, rig.f * rig.baseline / zs, np.nan)
    return out
