import json
import os

import numpy as np
import pytest

from sceneflow.cli import main
from sceneflow.geometry import CameraRig, RigidMotion
from sceneflow.synth import PlaneSpec, SceneSpec


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthetic ground truth plus one pipeline run, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    rig = CameraRig(f=160.0, cx=64.0, cy=32.0, baseline=0.5)
    spec = SceneSpec(
        rig=rig,
        width=128,
        height=64,
        planes=[PlaneSpec(point=[0.0, 0.0, 8.0], normal=[0.0, 0.0, 1.0], texture_scale=0.8)],
        camera=RigidMotion(np.eye(3), [0.0, 0.0, 0.35]),
        noise=1.0,
        seed=5,
    )
    spec_path = str(root / "scene.json")
    with open(spec_path, "w") as fh:
        fh.write(spec.to_json())
    gt = str(root / "gt")
    assert main(["synth", "--spec", spec_path, "--out", gt]) == 0
    est = str(root / "est")
    assert (
        main(
            ["run", "--left0", f"{gt}/left0.png", "--left1", f"{gt}/left1.png",
             "--right0", f"{gt}/right0.png", "--right1", f"{gt}/right1.png",
             "--calib", f"{gt}/calib.txt", "--out", est]
        )
        == 0
    )
    return {"root": root, "gt": gt, "est": est, "spec": spec_path}


def run_args(w, out, *extra):
    gt = w["gt"]
    return ["run", "--left0", f"{gt}/left0.png", "--left1", f"{gt}/left1.png",
            "--right0", f"{gt}/right0.png", "--right1", f"{gt}/right1.png",
            "--calib", f"{gt}/calib.txt", "--out", out, *extra]


def test_synth_outputs_complete(workdir):
    names = {"left0.png", "left1.png", "right0.png", "right1.png",
             "calib.txt", "disp0.png", "disp1.png", "flow.png", "moving.png"}
    assert names <= set(os.listdir(workdir["gt"]))


def test_run_outputs_complete(workdir):
    files = set(os.listdir(workdir["est"]))
    assert {"disp0.png", "disp1.png", "flow.png", "diagnostics.json"} <= files
    with open(os.path.join(workdir["est"], "diagnostics.json")) as fh:
        diag = json.load(fh)
    assert diag["egomotion_invoked"]
    assert diag["config"]["seed"] == 0
    assert "pose" in diag


def test_eval_reports_low_outliers(workdir, capsys):
    assert main(["eval", "--est", workdir["est"], "--gt", workdir["gt"]]) == 0
    out = capsys.readouterr().out
    rates = {}
    for line in out.strip().splitlines():
        name, value = line.split()
        if value != "undefined":
            rates[name] = float(value)
    assert set(rates) >= {"d1", "d2", "fl", "sf"}
    assert rates["sf"] < 0.05


def test_ego_off_recorded(workdir, tmp_path):
    out = str(tmp_path / "noego")
    assert main(run_args(workdir, out, "--ego", "off", "--refine", "off")) == 0
    with open(os.path.join(out, "diagnostics.json")) as fh:
        diag = json.load(fh)
    assert not diag["egomotion_invoked"]
    assert "pose" not in diag
    assert not os.path.exists(os.path.join(out, "moving.png"))


def test_deterministic_outputs(workdir, tmp_path):
    a = str(tmp_path / "a")
    b = str(tmp_path / "b")
    assert main(run_args(workdir, a, "--seed", "11", "--refine", "off")) == 0
    assert main(run_args(workdir, b, "--seed", "11", "--refine", "off")) == 0
    for name in ("disp0.png", "disp1.png", "flow.png"):
        with open(os.path.join(a, name), "rb") as fa, open(os.path.join(b, name), "rb") as fb:
            assert fa.read() == fb.read()


def test_viz_outputs(workdir, tmp_path):
    flow_png = str(tmp_path / "flow_color.png")
    disp_png = str(tmp_path / "disp_color.png")
    assert main(["viz", "--in", f"{workdir['est']}/flow.png", "--out", flow_png]) == 0
    assert main(["viz", "--in", f"{workdir['est']}/disp0.png", "--out", disp_png]) == 0
    import cv2

    img = cv2.imread(flow_png)
    assert img is not None and img.dtype == np.uint8
    assert cv2.imread(disp_png) is not None


def test_usage_errors():
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["run", "--left0", "x.png"]) == 1


def test_io_errors(workdir, tmp_path):
    missing = str(tmp_path / "missing.png")
    args = run_args(workdir, str(tmp_path / "o"))
    args[args.index("--left0") + 1] = missing
    assert main(args) == 2
    assert main(["eval", "--est", str(tmp_path), "--gt", workdir["gt"]]) == 2
    assert main(["viz", "--in", missing, "--out", str(tmp_path / "v.png")]) == 2
    bad_spec = tmp_path / "bad.json"
    bad_spec.write_text("{not json")
    assert main(["synth", "--spec", str(bad_spec), "--out", str(tmp_path / "s")]) == 2


def test_numeric_error_removes_outputs(workdir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"min_region": 10**9}))
    out = str(tmp_path / "fail")
    assert main(run_args(workdir, out, "--config", str(cfg))) == 3
    produced = os.listdir(out) if os.path.exists(out) else []
    assert produced == []
