import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from sceneflow.geometry import CameraRig, RigidMotion, sceneflow_from_motion
from sceneflow.synth import PlaneSpec, SceneSpec, SyntheticScene, plane_texture, synth_scene

RIG = CameraRig(f=160.0, cx=64.0, cy=32.0, baseline=0.5)


def wall(z, **kw):
    return PlaneSpec(point=[0.0, 0.0, z], normal=[0.0, 0.0, 1.0], **kw)


def basic_spec(**kw):
    args = dict(rig=RIG, width=128, height=64, planes=[wall(8.0)])
    args.update(kw)
    return SceneSpec(**args)


def test_static_scene_zero_flow():
    scene = synth_scene(basic_spec())
    assert scene.valid.all()
    assert not scene.moving.any()
    assert np.allclose(scene.flow[:, :, :2], 0.0, atol=1e-9)
    d0 = RIG.f * RIG.baseline / 8.0
    assert np.allclose(scene.flow[:, :, 2], d0, atol=1e-9)
    assert np.allclose(scene.flow[:, :, 3], d0, atol=1e-9)


def test_baseline_translation_matches_stereo():
    cam = RigidMotion(np.eye(3), [-RIG.baseline, 0.0, 0.0])
    scene = synth_scene(basic_spec(camera=cam))
    # moving the camera one baseline to the right reproduces the stereo view
    assert np.array_equal(scene.images[1], scene.images[2])
    assert np.allclose(scene.flow[:, :, 0], -scene.flow[:, :, 2], atol=1e-9)
    assert np.allclose(scene.flow[:, :, 1], 0.0, atol=1e-9)


def test_gt_matches_induced_flow():
    rot = Rotation.from_rotvec([0.0, 0.008, 0.002]).as_matrix()
    cam = RigidMotion(rot, [0.02, -0.01, 0.35])
    scene = synth_scene(basic_spec(camera=cam, planes=[wall(6.0), wall(9.0)]))
    xs, ys = np.meshgrid(np.arange(128, dtype=float), np.arange(64, dtype=float))
    expect = sceneflow_from_motion(xs, ys, scene.flow[:, :, 2], cam, RIG)
    assert np.allclose(scene.flow[:, :, 0], expect[:, :, 0], atol=1e-9)
    assert np.allclose(scene.flow[:, :, 1], expect[:, :, 1], atol=1e-9)
    assert np.allclose(scene.flow[:, :, 3], expect[:, :, 2], atol=1e-9)


def test_moving_plane_mask_and_depth_order():
    mover = wall(5.0, bounds=(-1.0, 1.0, -0.6, 0.6), motion=RigidMotion(np.eye(3), [0.05, 0.0, 0.0]))
    scene = synth_scene(basic_spec(planes=[mover, wall(8.0)]))
    assert scene.moving.any()
    assert not scene.moving.all()
    d_front = RIG.f * RIG.baseline / 5.0
    d_back = RIG.f * RIG.baseline / 8.0
    assert np.allclose(scene.flow[scene.moving, 2], d_front)
    assert np.allclose(scene.flow[~scene.moving, 2], d_back)
    # translation parallel to the plane keeps depth, so u = f*tx/Z
    assert np.allclose(scene.flow[scene.moving, 0], RIG.f * 0.05 / 5.0, atol=1e-9)


def test_deterministic_per_seed():
    spec = basic_spec(noise=2.0, seed=42)
    a = synth_scene(spec)
    b = synth_scene(basic_spec(noise=2.0, seed=42))
    for ia, ib in zip(a.images, b.images):
        assert np.array_equal(ia, ib)
    assert np.array_equal(a.flow, b.flow)
    c = synth_scene(basic_spec(noise=2.0, seed=43))
    assert not np.array_equal(a.images[0], c.images[0])


def test_uncovered_view_rejected():
    small = wall(8.0, bounds=(-0.5, 0.5, -0.5, 0.5))
    with pytest.raises(ValueError, match="cover"):
        synth_scene(basic_spec(planes=[small]))
    with pytest.raises(ValueError):
        synth_scene(basic_spec(planes=[]))


def test_texture_has_contrast():
    scene = synth_scene(basic_spec())
    img = scene.images[0]
    assert img.std() > 10.0
    gx = np.abs(np.diff(img, axis=1))
    assert (gx > 1.0).mean() > 0.3


def test_texture_range():
    rng = np.random.default_rng(0)
    t = plane_texture(rng.uniform(-50, 50, 4000), rng.uniform(-50, 50, 4000), seed=5)
    assert t.min() >= 30.0 - 1e-9
    assert t.max() <= 230.0 + 1e-9


def test_json_round_trip():
    rot = Rotation.from_rotvec([0.001, 0.01, 0.0]).as_matrix()
    spec = basic_spec(
        camera=RigidMotion(rot, [0.0, 0.0, 0.3]),
        planes=[
            wall(5.0, bounds=(-1.0, 1.0, -0.8, 0.8), motion=RigidMotion(np.eye(3), [0.1, 0.0, 0.0]), texture_scale=0.4),
            wall(8.0),
        ],
        noise=1.5,
        seed=7,
    )
    back = SceneSpec.from_json(spec.to_json())
    a = synth_scene(spec)
    b = synth_scene(back)
    for ia, ib in zip(a.images, b.images):
        assert np.allclose(ia, ib, atol=1e-12)
    assert np.allclose(a.flow, b.flow, atol=1e-12)
    assert np.array_equal(a.moving, b.moving)


def test_scene_type_contents():
    scene = synth_scene(basic_spec())
    assert isinstance(scene, SyntheticScene)
    assert len(scene.images) == 4
    assert scene.flow.shape == (64, 128, 4)
    assert scene.rig is RIG
