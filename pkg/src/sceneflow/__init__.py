"""Dense scene flow from two rectified stereo pairs.

The estimate assigns every reference pixel a 4-vector (u, v, d0, d1):
optical flow into the next frame plus disparities at both time steps,
which together determine the 3D motion of the observed point. The
pipeline matches sparse correspondences stochastically, filters them by
forward/inverse consistency, densifies them with boundary-aware
geodesic interpolation, optionally constrains static areas by the
estimated camera motion, and polishes the result variationally.
"""

from .config import PipelineConfig
from .edges import boundary_map, gradient_boundaries
from .egomotion import PoseEstimationError, apply_egomotion, estimate_pose, segment_motion
from .fields import invalid_vector, new_field, valid_mask
from .filtering import SeedSet, build_seeds, consistency_filter, disparity_fill, region_filter
from .geometry import CameraRig, RigidMotion, backproject, project, sceneflow_from_motion
from .interpolate import fit_affine, fit_plane, geodesic_labeling, interpolate
from .matcher import MatchField, match_dense
from .metrics import kitti_outlier_rate, precision_recall
from .pipeline import PipelineError, PipelineResult, run_pipeline
from .refine import RefineParams, refine
from .sgm import sgm_disparity
from .synth import PlaneSpec, SceneSpec, SyntheticScene, synth_scene

__version__ = "0.1.0"

__all__ = [
    "CameraRig",
    "MatchField",
    "PipelineConfig",
    "PipelineError",
    "PipelineResult",
    "PlaneSpec",
    "PoseEstimationError",
    "RefineParams",
    "RigidMotion",
    "SceneSpec",
    "SeedSet",
    "SyntheticScene",
    "apply_egomotion",
    "backproject",
    "boundary_map",
    "build_seeds",
    "consistency_filter",
    "disparity_fill",
    "estimate_pose",
    "fit_affine",
    "fit_plane",
    "geodesic_labeling",
    "gradient_boundaries",
    "interpolate",
    "invalid_vector",
    "kitti_outlier_rate",
    "match_dense",
    "new_field",
    "precision_recall",
    "project",
    "refine",
    "region_filter",
    "run_pipeline",
    "sceneflow_from_motion",
    "segment_motion",
    "sgm_disparity",
    "synth_scene",
    "valid_mask",
]
