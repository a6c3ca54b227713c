"""Analytic test scenes: textured planes, rigid motions, exact ground truth.

Scenes are built from (optionally bounded) planes carrying procedural
value-noise textures. Each plane may move rigidly between the two time
steps, and the camera itself may move. All four views are ray-cast from
the same analytic models that define the ground truth, so the reference
scene flow, motion mask, and camera pose are exact by construction.

Coordinates live in the left camera frame at t0. The camera motion maps
static points into the left frame at t1 (the same convention the pose
estimator uses); the right cameras sit one baseline along +x.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import CameraRig, RigidMotion

# splitmix-style mixing constants for the texture lattice
_U1 = np.uint64(0x9E3779B97F4A7C15)
_U2 = np.uint64(0xC2B2AE3D27D4EB4F)
_U4 = np.uint64(0xBF58476D1CE4E5B9)
_U5 = np.uint64(0x94D049BB133111EB)


def _lattice_values(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic pseudo-random values in [0, 1) on integer lattice points."""
    h = ix.astype(np.int64).view(np.uint64) * _U1
    h ^= iy.astype(np.int64).view(np.uint64) * _U2
    h ^= np.uint64((seed * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)
    h ^= h >> np.uint64(33)
    h *= _U4
    h ^= h >> np.uint64(29)
    h *= _U5
    h ^= h >> np.uint64(32)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(u: np.ndarray, v: np.ndarray, seed: int) -> np.ndarray:
    x0 = np.floor(u)
    y0 = np.floor(v)
    fx = u - x0
    fy = v - y0
    # smoothstep keeps the gradient continuous across lattice cells
    fx = fx * fx * (3.0 - 2.0 * fx)
    fy = fy * fy * (3.0 - 2.0 * fy)
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    v00 = _lattice_values(x0, y0, seed)
    v10 = _lattice_values(x0 + 1, y0, seed)
    v01 = _lattice_values(x0, y0 + 1, seed)
    v11 = _lattice_values(x0 + 1, y0 + 1, seed)
    top = v00 + (v10 - v00) * fx
    bot = v01 + (v11 - v01) * fx
    return top + (bot - top) * fy


def plane_texture(u: np.ndarray, v: np.ndarray, seed: int, octaves: int = 4) -> np.ndarray:
    """Multi-octave value noise mapped to grayscale [30, 230]."""
    total = np.zeros_like(np.asarray(u, dtype=np.float64))
    norm = 0.0
    for o in range(octaves):
        amp = 0.5**o
        freq = float(1 << o)
        total += amp * _value_noise(u * freq, v * freq, seed + o)
        norm += amp
    return 30.0 + 200.0 * total / norm


@dataclass
class PlaneSpec:
    """One textured plane of the scene.

    `point` and `normal` define the plane at t0; `motion` moves its
    material points to their t1 positions (None means static).
    `bounds` clips the plane to a rectangle (u0, u1, v0, v1) in its own
    material frame; unbounded planes act as backdrops. `texture_scale`
    is the feature size in scene units.
    """

    point: np.ndarray
    normal: np.ndarray
    motion: RigidMotion | None = None
    bounds: tuple[float, float, float, float] | None = None
    texture_scale: float = 1.0
    texture_seed: int | None = None

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=np.float64).reshape(3)
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        nn = np.linalg.norm(n)
        if nn == 0:
            raise ValueError("plane normal must be nonzero")
        self.normal = n / nn

    def frame(self) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic in-plane basis for texture and bounds."""
        n = self.normal
        a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = a - (a @ n) * n
        e1 /= np.linalg.norm(e1)
        return e1, np.cross(n, e1)


@dataclass
class SceneSpec:
    """Complete recipe for a four-view scene with ground truth."""

    rig: CameraRig
    width: int
    height: int
    planes: list[PlaneSpec]
    camera: RigidMotion = field(default_factory=RigidMotion.identity)
    noise: float = 0.0
    seed: int = 0

    def to_json(self) -> str:
        def motion_dict(m):
            if m is None:
                return None
            return {
                "rotvec": Rotation.from_matrix(m.rotation).as_rotvec().tolist(),
                "translation": m.translation.tolist(),
            }

        return json.dumps(
            {
                "rig": {"f": self.rig.f, "cx": self.rig.cx, "cy": self.rig.cy, "baseline": self.rig.baseline},
                "width": self.width,
                "height": self.height,
                "camera": motion_dict(self.camera),
                "noise": self.noise,
                "seed": self.seed,
                "planes": [
                    {
                        "point": p.point.tolist(),
                        "normal": p.normal.tolist(),
                        "motion": motion_dict(p.motion),
                        "bounds": list(p.bounds) if p.bounds is not None else None,
                        "texture_scale": p.texture_scale,
                        "texture_seed": p.texture_seed,
                    }
                    for p in self.planes
                ],
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "SceneSpec":
        def motion_from(d):
            if d is None:
                return None
            rot = Rotation.from_rotvec(np.asarray(d["rotvec"], dtype=np.float64)).as_matrix()
            return RigidMotion(rot, np.asarray(d["translation"], dtype=np.float64))

        raw = json.loads(text)
        rig = CameraRig(**raw["rig"])
        planes = [
            PlaneSpec(
                point=np.asarray(p["point"], dtype=np.float64),
                normal=np.asarray(p["normal"], dtype=np.float64),
                motion=motion_from(p.get("motion")),
                bounds=tuple(p["bounds"]) if p.get("bounds") is not None else None,
                texture_scale=p.get("texture_scale", 1.0),
                texture_seed=p.get("texture_seed"),
            )
            for p in raw["planes"]
        ]
        cam = motion_from(raw.get("camera")) or RigidMotion.identity()
        return SceneSpec(
            rig=rig,
            width=raw["width"],
            height=raw["height"],
            planes=planes,
            camera=cam,
            noise=raw.get("noise", 0.0),
            seed=raw.get("seed", 0),
        )


@dataclass
class SyntheticScene:
    """Rendered views plus exact ground truth."""

    images: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    flow: np.ndarray  # (H, W, 4) ground-truth (u, v, d0, d1)
    valid: np.ndarray  # (H, W) bool, gt usable
    moving: np.ndarray  # (H, W) bool, independently moving objects
    camera: RigidMotion
    rig: CameraRig


def _plane_at_t1(plane: PlaneSpec) -> tuple[np.ndarray, float]:
    """Normal/offset of the plane's t1 position in reference coordinates."""
    n = plane.normal
    c = float(n @ plane.point)
    if plane.motion is None:
        return n, c
    n1 = plane.motion.rotation @ n
    return n1, c + float(n1 @ plane.motion.translation)


def _render_view(spec: SceneSpec, to_cam: RigidMotion, at_t1: bool):
    """Ray-cast every plane into one camera; returns (image, plane id, depth).

    Texture lookups happen in each plane's material frame at t0, so the
    same surface point produces the same intensity in all views.
    """
    rig = spec.rig
    h, w = spec.height, spec.width
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dirs = np.stack([(xs - rig.cx) / rig.f, (ys - rig.cy) / rig.f, np.ones((h, w))], axis=-1)

    from_cam = to_cam.inverse()
    img = np.zeros((h, w))
    pid = np.full((h, w), -1, dtype=np.int64)
    zbuf = np.full((h, w), np.inf)
    for i, plane in enumerate(spec.planes):
        if at_t1:
            n_ref, c_ref = _plane_at_t1(plane)
        else:
            n_ref, c_ref = plane.normal, float(plane.normal @ plane.point)
        m = to_cam.rotation @ n_ref
        e = c_ref + float(m @ to_cam.translation)
        denom = dirs @ m
        with np.errstate(divide="ignore", invalid="ignore"):
            s = e / denom
        hit = np.isfinite(s) & (s > 1e-9)
        if not hit.any():
            continue
        pts = from_cam.apply(s[..., None] * dirs)
        if at_t1 and plane.motion is not None:
            pts = plane.motion.inverse().apply(pts)
        e1, e2 = plane.frame()
        rel = pts - plane.point
        tu = rel @ e1
        tv = rel @ e2
        if plane.bounds is not None:
            u0, u1, v0, v1 = plane.bounds
            hit &= (tu >= u0) & (tu <= u1) & (tv >= v0) & (tv <= v1)
        win = hit & (s < zbuf)
        if not win.any():
            continue
        seed = plane.texture_seed if plane.texture_seed is not None else spec.seed * 1009 + i
        tex = plane_texture(tu[win] / plane.texture_scale, tv[win] / plane.texture_scale, seed)
        img[win] = tex
        pid[win] = i
        zbuf[win] = s[win]
    return img, pid, zbuf


def synth_scene(spec: SceneSpec) -> SyntheticScene:
    """Render the four views and derive exact ground truth.

    Raises ValueError when any view has pixels not covered by a plane;
    scene specs must include a backdrop that tiles the whole frustum.
    """
    if not spec.planes:
        raise ValueError("scene needs at least one plane")
    rig = spec.rig
    h, w = spec.height, spec.width
    shift = RigidMotion(np.eye(3), np.array([-rig.baseline, 0.0, 0.0]))
    views = [
        (RigidMotion.identity(), False),  # reference, left t0
        (spec.camera, True),  # temporal, left t1
        (shift, False),  # stereo, right t0
        (shift.compose(spec.camera), True),  # cross, right t1
    ]
    rendered = []
    for to_cam, at_t1 in views:
        img, pid, zbuf = _render_view(spec, to_cam, at_t1)
        if (pid < 0).any():
            raise ValueError("scene planes do not cover the full view")
        rendered.append((img, pid, zbuf))

    img0, pid0, z0 = rendered[0]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dirs = np.stack([(xs - rig.cx) / rig.f, (ys - rig.cy) / rig.f, np.ones((h, w))], axis=-1)
    pts = z0[..., None] * dirs

    moving = np.zeros((h, w), dtype=bool)
    pts1 = pts.copy()
    for i, plane in enumerate(spec.planes):
        if plane.motion is None:
            continue
        sel = pid0 == i
        moving |= sel
        pts1[sel] = plane.motion.apply(pts[sel])
    cam1 = spec.camera.apply(pts1)

    z1 = cam1[..., 2]
    valid = z1 > 1e-9
    zs = np.where(valid, z1, 1.0)
    flow = np.empty((h, w, 4))
    flow[..., 0] = np.where(valid, rig.f * cam1[..., 0] / zs + rig.cx - xs, np.nan)
    flow[..., 1] = np.where(valid, rig.f * cam1[..., 1] / zs + rig.cy - ys, np.nan)
    flow[..., 2] = rig.f * rig.baseline / z0
    flow[..., 3] = np.where(valid, rig.f * rig.baseline / zs, np.nan)

    images = [rendered[k][0] for k in range(4)]
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed)
        images = [np.clip(im + rng.normal(0.0, spec.noise, im.shape), 0.0, 255.0) for im in images]
    return SyntheticScene(
        images=tuple(images),
        flow=flow,
        valid=valid,
        moving=moving,
        camera=spec.camera,
        rig=rig,
    )
