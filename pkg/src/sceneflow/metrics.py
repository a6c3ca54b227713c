"""Outlier-rate evaluation in the style of the KITTI scene flow benchmark.

A pixel is an outlier for a quantity when its error exceeds 3 px AND 5%
of the ground-truth magnitude; the combined rate counts pixels failing
any of disparity-t0, disparity-t1, or flow. Estimates that are invalid
where ground truth is valid always count as outliers.
"""

from __future__ import annotations

import numpy as np

OUTLIER_PX = 3.0
OUTLIER_REL = 0.05


def _disparity_outliers(est, gt, finite):
    err = np.abs(est - gt)
    bad = (err > OUTLIER_PX) & (err > OUTLIER_REL * np.abs(gt))
    return bad | ~finite


def kitti_outlier_rate(
    est: np.ndarray,
    gt: np.ndarray,
    valid: np.ndarray | None = None,
    fg: np.ndarray | None = None,
) -> dict[str, float]:
    """Outlier rates of an estimated field against ground truth.

    Args:
        est: (H, W, 4) estimated scene flow.
        gt: (H, W, 4) ground truth.
        valid: (H, W) bool, pixels where ground truth applies. Defaults
            to the finite-gt pixels.
        fg: (H, W) bool foreground mask; adds *_bg / *_fg split rates.

    Returns:
        dict with keys d1, d2, fl, sf (fractions over valid pixels).

    Raises:
        ValueError: mismatched shapes or no valid ground-truth pixels.
    """
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape or est.ndim != 3 or est.shape[2] != 4:
        raise ValueError(f"field shapes must match as (H, W, 4), got {est.shape} vs {gt.shape}")
    if valid is None:
        valid = np.isfinite(gt).all(axis=2)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != est.shape[:2]:
            raise ValueError("validity mask shape mismatch")
    if not valid.any():
        raise ValueError("no valid ground-truth pixels to evaluate")

    finite = np.isfinite(est)
    d1 = _disparity_outliers(est[:, :, 2], gt[:, :, 2], finite[:, :, 2])
    d2 = _disparity_outliers(est[:, :, 3], gt[:, :, 3], finite[:, :, 3])
    with np.errstate(invalid="ignore"):
        epe = np.hypot(est[:, :, 0] - gt[:, :, 0], est[:, :, 1] - gt[:, :, 1])
    mag = np.hypot(gt[:, :, 0], gt[:, :, 1])
    fl = ((epe > OUTLIER_PX) & (epe > OUTLIER_REL * mag)) | ~(finite[:, :, 0] & finite[:, :, 1])
    sf = d1 | d2 | fl

    def rate(bad, sel):
        n = int(sel.sum())
        return float((bad & sel).sum() / n) if n else float("nan")

    out = {
        "d1": rate(d1, valid),
        "d2": rate(d2, valid),
        "fl": rate(fl, valid),
        "sf": rate(sf, valid),
    }
    if fg is not None:
        fg = np.asarray(fg, dtype=bool)
        if fg.shape != valid.shape:
            raise ValueError("foreground mask shape mismatch")
        for name, bad in (("d1", d1), ("d2", d2), ("fl", fl), ("sf", sf)):
            out[f"{name}_bg"] = rate(bad, valid & ~fg)
            out[f"{name}_fg"] = rate(bad, valid & fg)
    return out


def precision_recall(
    est_moving: np.ndarray,
    gt_moving: np.ndarray,
) -> tuple[float | None, float | None]:
    """Precision and recall of a binary moving-pixel mask.

    Undefined ratios (no estimated positives, or no ground-truth
    positives) come back as None rather than a number.
    """
    est_moving = np.asarray(est_moving, dtype=bool)
    gt_moving = np.asarray(gt_moving, dtype=bool)
    if est_moving.shape != gt_moving.shape:
        raise ValueError("mask shapes must match")
    tp = int((est_moving & gt_moving).sum())
    fp = int((est_moving & ~gt_moving).sum())
    fn = int((~est_moving & gt_moving).sum())
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return precision, recall
