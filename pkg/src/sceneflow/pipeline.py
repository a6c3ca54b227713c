"""End-to-end driver: images in, dense scene flow out.

Stage order: dense matching forward and on the mirrored inverse
problem, consistency and region filtering, auxiliary stereo disparity
to recover geometry-only seeds, sparsification, boundary extraction,
geodesic interpolation, optional ego-motion (pose, segmentation,
static-pixel replacement), and variational refinement last.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .config import PipelineConfig
from .edges import boundary_map
from .egomotion import PoseEstimationError, apply_egomotion, estimate_pose, segment_motion
from .filtering import build_seeds, consistency_filter, disparity_fill, region_filter
from .geometry import CameraRig, RigidMotion
from .image import to_gray
from .interpolate import interpolate
from .matcher import inverse_images, match_dense, unflip_inverse_field
from .refine import RefineParams, refine
from .sgm import sgm_disparity


class PipelineError(RuntimeError):
    """A stage could not produce usable output."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class PipelineResult:
    field: np.ndarray  # (H, W, 4) dense scene flow
    moving: np.ndarray | None  # (H, W) bool when ego-motion ran
    pose: RigidMotion | None
    diagnostics: dict = dataclass_field(default_factory=dict)


def _refine_params(cfg: PipelineConfig) -> RefineParams:
    return RefineParams(
        kappa=cfg.kappa,
        gamma=cfg.gamma,
        lam=cfg.lam,
        eps=cfg.eps,
        outer_iterations=cfg.outer_iterations,
        inner_iterations=cfg.inner_iterations,
        sor_iterations=cfg.sor_iterations,
        omega=cfg.omega,
    )


def run_pipeline(
    images,
    rig: CameraRig,
    config: PipelineConfig | None = None,
) -> PipelineResult:
    """Run every stage on one rectified image quadruple.

    Args:
        images: (reference, temporal, stereo, cross) views, grayscale
            or color arrays of identical shape.
        rig: stereo intrinsics.
        config: stage parameters; defaults used when omitted.

    Returns:
        PipelineResult with the dense field, the moving-object mask and
        camera pose when ego-motion succeeded, and diagnostics with
        per-stage timings and seed counts.

    Raises:
        PipelineError: when a stage cannot continue (e.g. no seeds
            survive filtering).
    """
    cfg = config or PipelineConfig()
    if len(images) != 4:
        raise ValueError("need exactly four images (reference, temporal, stereo, cross)")
    grays = tuple(to_gray(np.asarray(im, dtype=np.float64)) for im in images)
    shape = grays[0].shape
    if any(g.shape != shape for g in grays):
        raise ValueError("all four images must share one shape")

    diag: dict = {"timings": {}, "egomotion_invoked": False}
    clock = time.perf_counter

    def stage(name):
        diag["timings"][name] = clock()

    def done(name):
        diag["timings"][name] = clock() - diag["timings"][name]

    rng = np.random.default_rng(cfg.seed)

    stage("matching")
    forward = match_dense(grays, cfg.subscales, cfg.iterations, rng=rng)
    done("matching")

    stage("inverse_matching")
    inv = match_dense(inverse_images(*grays), cfg.subscales, cfg.iterations, rng=rng)
    inverse = unflip_inverse_field(inv)
    done("inverse_matching")

    stage("filtering")
    mask, errors = consistency_filter(forward, inverse, cfg.consistency_tau)
    diag["consistent_matches"] = int(mask.sum())
    mask = region_filter(forward, mask, errors, cfg.consistency_tau, cfg.min_region)
    diag["surviving_matches"] = int(mask.sum())
    done("filtering")

    stage("auxiliary_disparity")
    sgm_disp, sgm_valid = sgm_disparity(grays[0], grays[2], cfg.max_disparity)
    diag["sgm_valid"] = int(sgm_valid.sum())
    fill = disparity_fill(forward, mask, sgm_disp, cfg.consistency_tau)
    diag["disparity_filled"] = int(fill.sum())
    done("auxiliary_disparity")

    stage("sparsify")
    seeds = build_seeds(forward, mask, errors, fill, sgm_disp, cfg.seed_block)
    diag["geometry_seeds"] = int(seeds.geo_xy.shape[0])
    diag["motion_seeds"] = int(seeds.motion_xy.shape[0])
    if seeds.geo_xy.shape[0] == 0 or seeds.motion_xy.shape[0] == 0:
        raise PipelineError("sparsify", "no seeds survive filtering")
    done("sparsify")

    stage("edges")
    bmap = boundary_map(grays[0], cfg.edge_source)
    done("edges")

    stage("interpolation")
    dense = interpolate(
        seeds,
        bmap,
        rig,
        cfg.geometry_neighborhood,
        cfg.motion_neighborhood,
        cfg.alpha,
    )
    done("interpolation")

    moving = None
    pose = None
    if cfg.egomotion:
        diag["egomotion_invoked"] = True
        stage("egomotion")
        try:
            pose, flags = estimate_pose(
                seeds.motion_xy.astype(np.float64),
                seeds.motion_vec,
                rig,
                seed=cfg.seed,
                iterations=cfg.ransac_iterations,
                inlier_px=cfg.inlier_px,
                relaxed_px=cfg.relaxed_px,
                max_depth=cfg.max_depth,
            )
            diag["pose_inliers"] = int(flags.sum())
            moving = segment_motion(
                seeds.motion_xy,
                ~flags,
                bmap,
                cfg.tau_segment,
                cfg.motion_neighborhood,
                cfg.alpha,
            )
            diag["moving_pixels"] = int(moving.sum())
            dense = apply_egomotion(dense, moving, pose, rig, diagnostics=diag)
        except PoseEstimationError as exc:
            warnings.warn(f"ego-motion unavailable, continuing without: {exc}")
            diag["egomotion_error"] = str(exc)
            moving = None
            pose = None
        done("egomotion")

    if cfg.refine:
        stage("refinement")
        dense = refine(dense, grays, bmap, _refine_params(cfg))
        done("refinement")

    diag["valid_pixels"] = int(np.isfinite(dense).all(axis=2).sum())
    return PipelineResult(field=dense, moving=moving, pose=pose, diagnostics=diag)
