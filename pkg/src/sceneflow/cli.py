"""Command line driver.

Subcommands: `run` executes the pipeline on four images, `synth`
renders a ground-truth scene from a JSON spec, `eval` scores an
estimate against ground truth, `viz` renders flow or disparity maps to
color PNGs. Exit codes: 0 success, 1 usage, 2 I/O problem, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import PipelineConfig
from .io import (
    disparity_to_color,
    flow_to_color,
    read_calibration,
    read_disparity_png,
    read_flow_png,
    read_image,
    read_pfm,
    write_calibration,
    write_color_png,
    write_disparity_png,
    write_flow_png,
    write_image,
)
from .metrics import kitti_outlier_rate, precision_recall
from .pipeline import PipelineError, run_pipeline
from .synth import SceneSpec, synth_scene

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    p = _Parser(prog="sceneflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="estimate scene flow for one image quadruple")
    run.add_argument("--left0", required=True, help="reference image (left, t0)")
    run.add_argument("--right0", required=True, help="stereo partner (right, t0)")
    run.add_argument("--left1", required=True, help="temporal partner (left, t1)")
    run.add_argument("--right1", required=True, help="cross view (right, t1)")
    run.add_argument("--calib", required=True, help="text file with `f cx cy baseline`")
    run.add_argument("--config", help="JSON pipeline config; defaults when omitted")
    run.add_argument("--edges", help="boundary source: baseline | file:PATH")
    run.add_argument("--ego", choices=["on", "off"], help="toggle the ego-motion stage")
    run.add_argument("--refine", choices=["on", "off"], help="toggle variational refinement")
    run.add_argument("--seed", type=int, help="override the RNG seed")
    run.add_argument("--out", required=True, help="output directory")

    synth = sub.add_parser("synth", help="render a synthetic scene with ground truth")
    synth.add_argument("--spec", required=True, help="scene spec JSON")
    synth.add_argument("--out", required=True, help="output directory")

    ev = sub.add_parser("eval", help="score an estimate directory against ground truth")
    ev.add_argument("--est", required=True, help="directory with disp0/disp1/flow PNGs")
    ev.add_argument("--gt", required=True, help="directory with ground-truth maps")

    viz = sub.add_parser("viz", help="render a flow/disparity map as a color PNG")
    viz.add_argument("--in", dest="src", required=True, help="flow PNG, disparity PNG, or PFM")
    viz.add_argument("--out", required=True, help="8-bit color PNG")
    return p


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    changes = {}
    if args.edges is not None:
        changes["edge_source"] = args.edges
    if args.ego is not None:
        changes["egomotion"] = args.ego == "on"
    if args.refine is not None:
        changes["refine"] = args.refine == "on"
    if args.seed is not None:
        changes["seed"] = args.seed
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _cmd_run(args) -> int:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    cfg = _apply_overrides(cfg, args)
    images = tuple(read_image(p) for p in (args.left0, args.left1, args.right0, args.right1))
    rig = read_calibration(args.calib)

    result = run_pipeline(images, rig, cfg)

    os.makedirs(args.out, exist_ok=True)
    written: list[str] = []
    try:
        def emit(name, writer, *payload):
            path = os.path.join(args.out, name)
            writer(path, *payload)
            written.append(path)

        field = result.field
        ok = np.isfinite(field).all(axis=2)
        emit("disp0.png", write_disparity_png, field[:, :, 2])
        emit("disp1.png", write_disparity_png, field[:, :, 3])
        emit("flow.png", write_flow_png, field[:, :, :2], ok)
        if result.moving is not None:
            emit("moving.png", write_image, result.moving * 255.0)
        diag = dict(result.diagnostics)
        if result.pose is not None:
            diag["pose"] = {
                "rotation": result.pose.rotation.tolist(),
                "translation": result.pose.translation.tolist(),
            }
        diag["config"] = dataclasses.asdict(cfg)
        path = os.path.join(args.out, "diagnostics.json")
        with open(path, "w") as fh:
            json.dump(diag, fh, indent=2)
        written.append(path)
    except Exception:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return EXIT_OK


def _cmd_synth(args) -> int:
    with open(args.spec) as fh:
        spec = SceneSpec.from_json(fh.read())
    scene = synth_scene(spec)
    os.makedirs(args.out, exist_ok=True)
    names = ("left0.png", "left1.png", "right0.png", "right1.png")
    for name, img in zip(names, scene.images):
        write_image(os.path.join(args.out, name), img)
    write_calibration(os.path.join(args.out, "calib.txt"), scene.rig)
    write_disparity_png(os.path.join(args.out, "disp0.png"), scene.flow[:, :, 2])
    write_disparity_png(os.path.join(args.out, "disp1.png"), scene.flow[:, :, 3])
    write_flow_png(os.path.join(args.out, "flow.png"), scene.flow[:, :, :2], scene.valid)
    write_image(os.path.join(args.out, "moving.png"), scene.moving * 255.0)
    return EXIT_OK


def _load_field(dirpath: str):
    d0 = read_disparity_png(os.path.join(dirpath, "disp0.png"))
    d1 = read_disparity_png(os.path.join(dirpath, "disp1.png"))
    flow, _ = read_flow_png(os.path.join(dirpath, "flow.png"))
    if d0.shape != d1.shape or d0.shape != flow.shape[:2]:
        raise IOError(f"inconsistent map sizes in {dirpath}")
    return np.concatenate([flow, d0[:, :, None], d1[:, :, None]], axis=2)


def _cmd_eval(args) -> int:
    est = _load_field(args.est)
    gt = _load_field(args.gt)
    rates = kitti_outlier_rate(est, gt, np.isfinite(gt).all(axis=2))
    for name in ("d1", "d2", "fl", "sf"):
        print(f"{name} {rates[name]:.4f}")
    est_mask = os.path.join(args.est, "moving.png")
    gt_mask = os.path.join(args.gt, "moving.png")
    if os.path.exists(est_mask) and os.path.exists(gt_mask):
        prec, rec = precision_recall(read_image(est_mask) > 127, read_image(gt_mask) > 127)
        print(f"precision {'undefined' if prec is None else f'{prec:.4f}'}")
        print(f"recall {'undefined' if rec is None else f'{rec:.4f}'}")
    return EXIT_OK


def _cmd_viz(args) -> int:
    if args.src.lower().endswith(".pfm"):
        data = read_pfm(args.src)
        if data.ndim != 2:
            raise IOError("viz supports single-channel PFM maps")
        rgb = disparity_to_color(np.where(data > 0, data, np.nan))
    else:
        import cv2

        raw = cv2.imread(args.src, cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise IOError(f"cannot read image: {args.src}")
        if raw.ndim == 3 and raw.shape[2] == 3 and raw.dtype == np.uint16:
            flow, _ = read_flow_png(args.src)
            rgb = flow_to_color(flow)
        elif raw.ndim == 2 and raw.dtype == np.uint16:
            rgb = disparity_to_color(read_disparity_png(args.src))
        else:
            raise IOError(f"unsupported map format: {args.src}")
    write_color_png(args.out, rgb)
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "synth": _cmd_synth, "eval": _cmd_eval, "viz": _cmd_viz}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"error: malformed input file: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PipelineError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
