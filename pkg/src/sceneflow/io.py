"""File formats: 16-bit PNG disparity/flow codecs, PFM, calibration, viz.

Disparity PNG stores disparity * 256 as uint16 with 0 marking invalid
pixels. Flow PNG stores (u, v) * 64 + 2^15 in the R and G channels of a
16-bit PNG and validity in B. Both are exact round trips on their
representable grids. PFM files are written little-endian, bottom row
first. Calibration is a plain text line `f cx cy baseline`.
"""

from __future__ import annotations

import numpy as np

import cv2

from .geometry import CameraRig


def _imread(path: str, flags: int) -> np.ndarray:
    data = cv2.imread(str(path), flags)
    if data is None:
        raise IOError(f"cannot read image: {path}")
    return data


def read_image(path: str) -> np.ndarray:
    """Load an image as float64 grayscale in [0, 255]."""
    data = _imread(path, cv2.IMREAD_GRAYSCALE)
    return data.astype(np.float64)


def write_image(path: str, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image), 0, 255).astype(np.uint8)
    if not cv2.imwrite(str(path), arr):
        raise IOError(f"cannot write image: {path}")


# -- disparity ----------------------------------------------------------------


def write_disparity_png(path: str, disp: np.ndarray) -> None:
    """16-bit disparity PNG; non-finite or non-positive values become invalid."""
    disp = np.asarray(disp, dtype=np.float64)
    ok = np.isfinite(disp) & (disp > 0)
    stored = np.zeros(disp.shape, dtype=np.uint16)
    vals = np.rint(disp[ok] * 256.0)
    stored[ok] = np.clip(vals, 0, 65535).astype(np.uint16)
    if not cv2.imwrite(str(path), stored):
        raise IOError(f"cannot write disparity PNG: {path}")


def read_disparity_png(path: str) -> np.ndarray:
    """Disparity map with NaN at invalid (stored-zero) pixels."""
    raw = _imread(path, cv2.IMREAD_UNCHANGED)
    if raw.ndim != 2 or raw.dtype != np.uint16:
        raise IOError(f"not a 16-bit single-channel disparity PNG: {path}")
    disp = raw.astype(np.float64) / 256.0
    disp[raw == 0] = np.nan
    return disp


# -- optical flow -------------------------------------------------------------


def write_flow_png(path: str, flow: np.ndarray, valid: np.ndarray | None = None) -> None:
    """16-bit RG flow PNG with validity in the blue channel.

    Representable motions are multiples of 1/64 px within +-2^9; values
    outside are clipped. Non-finite vectors are stored invalid.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"expected (H, W, 2) flow, got {flow.shape}")
    finite = np.isfinite(flow).all(axis=2)
    ok = finite if valid is None else (np.asarray(valid, dtype=bool) & finite)
    enc = np.rint(np.nan_to_num(flow) * 64.0 + 32768.0)
    enc = np.clip(enc, 0, 65535).astype(np.uint16)
    bgr = np.zeros(flow.shape[:2] + (3,), dtype=np.uint16)
    bgr[:, :, 2] = np.where(ok, enc[:, :, 0], 0)
    bgr[:, :, 1] = np.where(ok, enc[:, :, 1], 0)
    bgr[:, :, 0] = ok.astype(np.uint16)
    if not cv2.imwrite(str(path), bgr):
        raise IOError(f"cannot write flow PNG: {path}")


def read_flow_png(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Returns (flow, valid); invalid pixels carry NaN."""
    raw = _imread(path, cv2.IMREAD_UNCHANGED)
    if raw.ndim != 3 or raw.shape[2] != 3 or raw.dtype != np.uint16:
        raise IOError(f"not a 16-bit three-channel flow PNG: {path}")
    valid = raw[:, :, 0] > 0
    flow = np.empty(raw.shape[:2] + (2,), dtype=np.float64)
    flow[:, :, 0] = (raw[:, :, 2].astype(np.float64) - 32768.0) / 64.0
    flow[:, :, 1] = (raw[:, :, 1].astype(np.float64) - 32768.0) / 64.0
    flow[~valid] = np.nan
    return flow, valid


# -- PFM ----------------------------------------------------------------------


def write_pfm(path: str, data: np.ndarray) -> None:
    """Grayscale or 3-channel float map, little-endian, bottom-up rows."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        magic = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"PFM supports (H, W) or (H, W, 3), got {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(data[::-1].astype("<f4").tobytes())


def read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic == b"Pf":
            channels = 1
        elif magic == b"PF":
            channels = 3
        else:
            raise IOError(f"not a PFM file: {path}")
        try:
            w, h = map(int, fh.readline().split())
            scale = float(fh.readline())
        except ValueError as exc:
            raise IOError(f"malformed PFM header: {path}") from exc
        dtype = "<f4" if scale < 0 else ">f4"
        buf = fh.read(w * h * channels * 4)
    if len(buf) != w * h * channels * 4:
        raise IOError(f"truncated PFM data: {path}")
    data = np.frombuffer(buf, dtype=dtype).astype(np.float64)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return data.reshape(shape)[::-1].copy()


# -- calibration --------------------------------------------------------------


def read_calibration(path: str) -> CameraRig:
    """First non-comment line gives `f cx cy baseline`."""
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise IOError(f"calibration line needs 4 numbers, got {line!r}")
            try:
                f, cx, cy, b = map(float, parts)
            except ValueError as exc:
                raise IOError(f"malformed calibration line: {line!r}") from exc
            return CameraRig(f=f, cx=cx, cy=cy, baseline=b)
    raise IOError(f"no calibration data in {path}")


def write_calibration(path: str, rig: CameraRig) -> None:
    with open(path, "w") as fh:
        fh.write(f"{rig.f} {rig.cx} {rig.cy} {rig.baseline}\n")


# -- visualization ------------------------------------------------------------


def flow_to_color(flow: np.ndarray, max_flow: float | None = None) -> np.ndarray:
    """Hue encodes direction, saturation magnitude; invalid pixels black."""
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[:, :, 0], flow[:, :, 1]
    ok = np.isfinite(u) & np.isfinite(v)
    mag = np.hypot(np.where(ok, u, 0), np.where(ok, v, 0))
    if max_flow is None:
        max_flow = mag.max() if mag.max() > 0 else 1.0
    hsv = np.zeros(flow.shape[:2] + (3,), dtype=np.uint8)
    ang = np.arctan2(np.where(ok, v, 0), np.where(ok, u, 0))
    hsv[:, :, 0] = ((ang / (2 * np.pi) + 0.5) * 180).astype(np.uint8)
    hsv[:, :, 1] = np.clip(mag / max_flow * 255, 0, 255).astype(np.uint8)
    hsv[:, :, 2] = np.where(ok, 255, 0).astype(np.uint8)
    bgr = cv2.cvtColor(hsv, cv2.COLOR_HSV2BGR)
    return bgr[:, :, ::-1].copy()


def disparity_to_color(disp: np.ndarray, max_disp: float | None = None) -> np.ndarray:
    """Disparity on a jet colormap; invalid pixels black."""
    disp = np.asarray(disp, dtype=np.float64)
    ok = np.isfinite(disp) & (disp > 0)
    if max_disp is None:
        max_disp = disp[ok].max() if ok.any() else 1.0
    scaled = np.clip(np.where(ok, disp, 0) / max_disp * 255, 0, 255).astype(np.uint8)
    bgr = cv2.applyColorMap(scaled, cv2.COLORMAP_JET)
    bgr[~ok] = 0
    return bgr[:, :, ::-1].copy()


def write_color_png(path: str, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    if not cv2.imwrite(str(path), rgb[:, :, ::-1]):
        raise IOError(f"cannot write PNG: {path}")
