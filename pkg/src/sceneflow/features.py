"""Pixel descriptors used by the sparse matcher.

Two kinds of features are produced:

* Walsh-Hadamard transform (WHT) descriptors of grayscale patches,
  used to index the search trees for initialization. The descriptor
  keeps the lowest-sequency transform coefficients, DC first.
* dense SIFT-like descriptors (4x4 spatial cells, 8 orientation bins
  over a 16x16 support) reduced to their first three principal
  components. Matching costs compare these compact per-pixel vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import hadamard
from scipy.ndimage import correlate1d

# -- Walsh-Hadamard descriptors ----------------------------------------------


def walsh_matrix(order: int) -> np.ndarray:
    """Hadamard matrix rows reordered by sequency (sign-change count)."""
    h = hadamard(order)
    changes = np.count_nonzero(np.diff(h, axis=1), axis=1)
    return h[np.argsort(changes, kind="stable")]


def _coefficient_order(patch: int, n_coeff: int) -> tuple[np.ndarray, np.ndarray]:
    # 2D coefficients ordered by combined row+column sequency, DC first.
    ii, jj = np.meshgrid(np.arange(patch), np.arange(patch), indexing="ij")
    order = np.lexsort((jj.ravel(), ii.ravel(), (ii + jj).ravel()))[:n_coeff]
    return ii.ravel()[order], jj.ravel()[order]


def wht_descriptors(
    image: np.ndarray,
    pixels: np.ndarray,
    patch: int = 8,
    n_coeff: int = 16,
    stride: int = 1,
) -> np.ndarray:
    """WHT descriptors of square patches around the given pixels.

    Args:
        image: (H, W) grayscale image.
        pixels: (N, 2) integer pixel coordinates as (x, y) pairs.
        patch: patch side length, must be a power of two.
        n_coeff: number of retained coefficients (DC first).
        stride: spacing between patch samples, in pixels. Patches reaching
            beyond the image borders use replicate padding.

    Returns:
        (N, n_coeff) float64 array of unnormalized coefficients.
    """
    if patch < 1 or patch & (patch - 1):
        raise ValueError(f"patch side must be a power of two, got {patch}")
    if not 1 <= n_coeff <= patch * patch:
        raise ValueError(f"n_coeff must lie in [1, {patch * patch}], got {n_coeff}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("WHT descriptors require a grayscale image")
    pix = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    h, w = img.shape
    offs = stride * np.arange(-(patch // 2), patch - patch // 2)
    ys = np.clip(pix[:, 1, None] + offs[None, :], 0, h - 1)
    xs = np.clip(pix[:, 0, None] + offs[None, :], 0, w - 1)
    patches = img[ys[:, :, None], xs[:, None, :]]  # (N, patch, patch)
    wm = walsh_matrix(patch).astype(np.float64)
    coeffs = np.einsum("ip,npq,jq->nij", wm, patches, wm)
    ri, ci = _coefficient_order(patch, n_coeff)
    return coeffs[:, ri, ci]


def wht_descriptor(
    image: np.ndarray,
    x: int,
    y: int,
    patch: int = 8,
    n_coeff: int = 16,
    stride: int = 1,
) -> np.ndarray:
    """Single-pixel convenience wrapper around :func:`wht_descriptors`."""
    return wht_descriptors(image, np.array([[x, y]]), patch, n_coeff, stride)[0]


# -- dense SIFT + PCA --------------------------------------------------------

_N_ORIENT = 8
_CELL = 4  # cell side in pixels; 4x4 cells tile the 16x16 support
_CLAMP = 0.2


def _shift_replicate(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    # arr sampled at (y + dy, x + dx) with replicate padding
    h, w = arr.shape
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    return arr[ys][:, xs]


def dense_sift(image: np.ndarray) -> np.ndarray:
    """Per-pixel 128-dimensional SIFT-like descriptors.

    Gradient magnitude is soft-assigned to 8 orientation bins, pooled
    into 4x4 spatial cells with bilinear weights over a 16x16 support,
    then each descriptor is L2-normalized and clamped at 0.2. Constant
    images produce all-zero descriptors.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("dense SIFT requires a grayscale image")
    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)

    # soft-assign magnitude to the two adjacent orientation bins
    binpos = ang / (2.0 * np.pi / _N_ORIENT)
    lo = np.floor(binpos).astype(np.int64) % _N_ORIENT
    frac = binpos - np.floor(binpos)
    channels = np.zeros((_N_ORIENT,) + img.shape)
    for o in range(_N_ORIENT):
        channels[o] = np.where(lo == o, mag * (1.0 - frac), 0.0)
        channels[o] += np.where((lo + 1) % _N_ORIENT == o, mag * frac, 0.0)

    # bilinear spatial weighting within a cell == triangle filter of radius 4
    tri = 1.0 - np.abs(np.arange(-_CELL + 1, _CELL)) / _CELL
    pooled = correlate1d(channels, tri, axis=1, mode="nearest")
    pooled = correlate1d(pooled, tri, axis=2, mode="nearest")

    cell_offsets = np.array([-6, -2, 2, 6])  # cell centers across the support

    desc = np.empty(img.shape + (16, _N_ORIENT), dtype=np.float64)
    for i, dy in enumerate(cell_offsets):
        for j, dx in enumerate(cell_offsets):
            for o in range(_N_ORIENT):
                desc[:, :, i * 4 + j, o] = _shift_replicate(pooled[o], dy, dx)
    desc = desc.reshape(img.shape + (128,))

    norm = np.linalg.norm(desc, axis=-1, keepdims=True)
    desc = np.where(norm > 1e-12, desc / np.maximum(norm, 1e-12), 0.0)
    return np.minimum(desc, _CLAMP).astype(np.float32)


@dataclass
class FeatureBasis:
    """PCA basis shared by the feature maps of one matching problem."""

    mean: np.ndarray  # (128,)
    components: np.ndarray  # (128, 3)
    explained_variance_ratio: float


def fit_pca_basis(descriptor_maps: Sequence[np.ndarray], subsample: int = 2) -> FeatureBasis:
    """Fit the shared 3-component PCA basis on pooled descriptors.

    Pooling subsamples every `subsample`-th pixel in both axes (one in
    four pixels by default). Eigenvector signs are fixed so the first
    nonzero component of each is positive.
    """
    pooled = np.concatenate(
        [d[::subsample, ::subsample].reshape(-1, d.shape[-1]) for d in descriptor_maps]
    ).astype(np.float64)
    mean = pooled.mean(axis=0)
    centered = pooled - mean
    cov = centered.T @ centered / max(1, centered.shape[0])
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    comps = evecs[:, order[:3]].copy()
    for c in range(comps.shape[1]):
        col = comps[:, c]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            comps[:, c] = -col
    total = evals.sum()
    ratio = float(evals[:3].sum() / total) if total > 1e-30 else 0.0
    return FeatureBasis(mean=mean, components=comps, explained_variance_ratio=ratio)


def sift_pca_features(
    images: Sequence[np.ndarray],
) -> tuple[list[np.ndarray], FeatureBasis]:
    """Compact matching features for a set of images.

    Computes dense SIFT descriptors per image, fits one PCA basis on the
    pooled descriptors of all images and projects every pixel onto its
    first three components.

    Returns:
        ([(H, W, 3) float32 per image], basis). The basis reports the
        captured variance ratio of the three components.
    """
    if not images:
        raise ValueError("no images given")
    descs = [dense_sift(im) for im in images]
    basis = fit_pca_basis(descs)
    feats = [
        ((d.astype(np.float64) - basis.mean) @ basis.components).astype(np.float32)
        for d in descs
    ]
    return feats, basis
