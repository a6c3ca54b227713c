"""Variational refinement of the dense field.

Refines (u, v, d') per pixel, where d' is the disparity change between
the two time steps, while the reference disparity d0 stays fixed. The
energy combines gradient-constancy data terms for the temporal pair and
the cross pair (displacement (u - d0 - d', v)) with an edge-weighted
smoothness term; all penalties use the Charbonnier function
psi(s) = sqrt(s + eps^2).

No coarse-to-fine warping here: the field arrives from the interpolator
close to the solution, so a few relinearizations suffice. Each outer
iteration rewars the image gradients, fixes the Charbonnier weights
(lagged diffusivity) and solves the resulting sparse linear system for
increments with a red-black successive over-relaxation solver working
on 3x3 pixel blocks.

Pixels whose input correspondences leave the image and pixels without a
valid vector are frozen: they keep their values and act as fixed
boundary values inside the smoothness stencil.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .image import to_gray

_N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class RefineParams:
    kappa: float = 5.0  # boundary weight exponent
    gamma: float = 0.77  # gradient-constancy weight
    lam: float = 10.0  # extra smoothness on d'
    eps: float = 0.001  # Charbonnier offset
    outer_iterations: int = 2
    inner_iterations: int = 1
    sor_iterations: int = 30
    omega: float = 1.9

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.0 < self.omega < 2.0:
            raise ValueError("omega must lie in (0, 2)")
        if self.inner_iterations < 1 or self.sor_iterations < 1:
            raise ValueError("iteration counts must be positive")


@dataclass
class MotionField:
    """Per-pixel (u, v, d') with a mask of pixels excluded from the solve."""

    uvd: np.ndarray  # (H, W, 3)
    frozen: np.ndarray  # (H, W) bool


def make_motion_field(field: np.ndarray) -> tuple[MotionField, np.ndarray]:
    """Split a scene flow field into the refined part and fixed d0.

    Freezes pixels whose flow or cross correspondence already lies
    outside the image, and pixels without a valid vector.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape[:2]
    u, v, d0, d1 = np.moveaxis(field, -1, 0)
    finite = np.isfinite(field).all(axis=-1)
    xs = np.arange(w)[None, :]
    ys = np.arange(h)[:, None]
    with np.errstate(invalid="ignore"):
        flow_in = (xs + u >= 0) & (xs + u <= w - 1) & (ys + v >= 0) & (ys + v <= h - 1)
        cross_in = (xs + u - d1 >= 0) & (xs + u - d1 <= w - 1) & flow_in
    frozen = ~(finite & flow_in & cross_in)
    uvd = np.stack([u, v, d1 - d0], axis=-1)
    return MotionField(uvd=uvd, frozen=frozen), d0.copy()


def merge_motion_field(motion: MotionField, d0: np.ndarray) -> np.ndarray:
    """Reassemble (u, v, d0, d0 + d') into a scene flow field."""
    u, v, dp = np.moveaxis(motion.uvd, -1, 0)
    return np.stack([u, v, d0, d0 + dp], axis=-1)


# -- shared term evaluation ---------------------------------------------------


def _bilinear(img, x, y):
    h, w = img.shape
    x = np.clip(np.nan_to_num(x), 0.0, w - 1.0)
    y = np.clip(np.nan_to_num(y), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    return (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )


def _gradients(img):
    gy, gx = np.gradient(img)
    return gx, gy


@dataclass
class _Terms:
    """Everything the linearization needs at one warp state."""

    r_flow: np.ndarray  # (H, W, 2) gradient-constancy residuals
    j_flow: np.ndarray  # (H, W, 2, 2) residual Jacobian wrt (du, dv)
    beta_flow: np.ndarray  # (H, W) data-term mask
    r_cross: np.ndarray  # (H, W, 2)
    j_cross: np.ndarray  # (H, W, 2, 3) Jacobian wrt (du, dv, dd')
    beta_cross: np.ndarray
    phi: np.ndarray  # (H, W) smoothness edge weight e^{-kappa B}
    finite: np.ndarray  # (H, W) pixels with usable values


def _charbonnier(s, eps):
    return np.sqrt(s + eps * eps)


def _terms(motion: MotionField, d0, grays, boundaries, params: RefineParams) -> _Terms:
    ref, temporal, cross = grays
    h, w = ref.shape
    u, v, dp = np.moveaxis(motion.uvd, -1, 0)
    finite = np.isfinite(motion.uvd).all(axis=-1) & np.isfinite(d0)
    xs = np.arange(w)[None, :]
    ys = np.arange(h)[:, None]

    rx, ry = _gradients(ref)
    anchor = np.stack([rx, ry], axis=-1)

    def data_term(img, tx, ty):
        with np.errstate(invalid="ignore"):
            beta = finite & (tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)
        gx, gy = _gradients(img)
        gxx, gxy = _gradients(gx)
        _, gyy = _gradients(gy)
        r = np.stack([_bilinear(gx, tx, ty), _bilinear(gy, tx, ty)], axis=-1) - anchor
        jac = np.stack(
            [
                np.stack([_bilinear(gxx, tx, ty), _bilinear(gxy, tx, ty)], axis=-1),
                np.stack([_bilinear(gxy, tx, ty), _bilinear(gyy, tx, ty)], axis=-1),
            ],
            axis=-2,
        )  # rows: residual components, cols: (dx, dy) of the warp point
        r[~beta] = 0.0
        jac[~beta] = 0.0
        return r, jac, beta

    r_f, j_f, beta_f = data_term(temporal, xs + u, ys + v)
    r_c, j2, beta_c = data_term(cross, xs + u - d0 - dp, ys + v)
    # cross warp moves by (du - dd', dv): fold the sign into the Jacobian
    j_c = np.concatenate([j2, -j2[:, :, :, :1]], axis=-1)

    phi = np.exp(-params.kappa * np.asarray(boundaries, dtype=np.float64))
    return _Terms(r_f, j_f, beta_f, r_c, j_c, beta_c, phi, finite)


def _smoothness_arg(uvd, finite, lam):
    """Half the squared neighbor differences, summed per pixel."""
    h, w = finite.shape
    s = np.zeros((h, w))
    comp_w = np.array([1.0, 1.0, lam])
    for dy, dx in _N4:
        src = np.s_[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)]
        dst = np.s_[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)]
        pair = finite[dst] & finite[src]
        diff = np.where(pair[..., None], uvd[dst] - uvd[src], 0.0)
        s[dst] += 0.5 * (diff * diff) @ comp_w
    return s


def _edge_weights(uvd, terms: _Terms, params: RefineParams):
    """Lagged diffusivity psi' per pixel: phi / (2 sqrt(s + eps^2))."""
    s = _smoothness_arg(uvd, terms.finite, params.lam)
    return terms.phi / (2.0 * _charbonnier(s, params.eps))


def _data_weights(terms: _Terms, delta, params: RefineParams):
    """Lagged Charbonnier weights of both data terms at the given increment."""
    g, eps = params.gamma, params.eps
    rf = terms.r_flow + np.einsum("hwij,hwj->hwi", terms.j_flow, delta[:, :, :2])
    rc = terms.r_cross + np.einsum("hwij,hwj->hwi", terms.j_cross, delta)
    wf = np.where(terms.beta_flow, g / (2.0 * _charbonnier(g * (rf * rf).sum(-1), eps)), 0.0)
    wc = np.where(terms.beta_cross, g / (2.0 * _charbonnier(g * (rc * rc).sum(-1), eps)), 0.0)
    return wf, wc


# -- the linear system --------------------------------------------------------


@dataclass
class LinearSystem:
    """Sparse normal equations A delta = b for one linearization.

    A couples each active pixel to its 4-neighbors with scalar edge
    weights (scaled by lam on the d' component); `diag` holds the 3x3
    per-pixel blocks including the accumulated neighbor weights.
    """

    diag: np.ndarray  # (H, W, 3, 3)
    b: np.ndarray  # (H, W, 3)
    edge: np.ndarray  # (4, H, W) coupling to each neighbor in _N4 order
    active: np.ndarray  # (H, W) bool
    lam: float


def _build_system(motion: MotionField, terms: _Terms, delta, params: RefineParams):
    h, w = terms.finite.shape
    active = terms.finite & ~motion.frozen
    held = np.where(active[..., None], delta, 0.0)
    wf, wc = _data_weights(terms, held, params)
    psi = _edge_weights(motion.uvd + held, terms, params)

    diag = np.zeros((h, w, 3, 3))
    diag[:, :, :2, :2] += 2.0 * wf[..., None, None] * np.einsum(
        "hwki,hwkj->hwij", terms.j_flow, terms.j_flow
    )
    diag += 2.0 * wc[..., None, None] * np.einsum(
        "hwki,hwkj->hwij", terms.j_cross, terms.j_cross
    )
    b = np.zeros((h, w, 3))
    b[:, :, :2] -= 2.0 * wf[..., None] * np.einsum("hwki,hwk->hwi", terms.j_flow, terms.r_flow)
    b -= 2.0 * wc[..., None] * np.einsum("hwki,hwk->hwi", terms.j_cross, terms.r_cross)

    comp = np.array([1.0, 1.0, params.lam])
    edge = np.zeros((4, h, w))
    for k, (dy, dx) in enumerate(_N4):
        src = np.s_[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)]
        dst = np.s_[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)]
        pair = terms.finite[dst] & terms.finite[src]
        g = np.where(pair, psi[dst] + psi[src], 0.0)
        edge[k][dst] = g
        gsum = g[..., None] * comp
        for c in range(3):
            diag[:, :, c, c][dst] += gsum[..., c]
        b[dst] -= gsum * np.where(
            pair[..., None], motion.uvd[dst] - motion.uvd[src], 0.0
        )
    # a pixel with no finite neighbor may lack full-rank equations; hold it
    active = active & (edge.sum(axis=0) > 0)
    b[~active] = 0.0
    return LinearSystem(diag=diag, b=b, edge=edge, active=active, lam=params.lam)


def linear_system(
    motion: MotionField,
    d0: np.ndarray,
    images,
    boundaries: np.ndarray,
    params: RefineParams = RefineParams(),
) -> LinearSystem:
    """First linearization of the refinement energy around the field."""
    grays = _to_grays(images)
    terms = _terms(motion, d0, grays, boundaries, params)
    delta = np.zeros_like(motion.uvd)
    return _build_system(motion, terms, delta, params)


def linearized_energy(
    motion: MotionField,
    d0: np.ndarray,
    images,
    boundaries: np.ndarray,
    delta: np.ndarray,
    params: RefineParams = RefineParams(),
) -> float:
    """Quadratic model whose negative gradient at zero is the system RHS.

    Evaluated directly from residuals, Jacobians and lagged weights so
    tests can compare finite differences against the assembled system.
    """
    grays = _to_grays(images)
    terms = _terms(motion, d0, grays, boundaries, params)
    zero = np.zeros_like(delta)
    wf, wc = _data_weights(terms, zero, params)
    psi = _edge_weights(motion.uvd, terms, params)
    active = terms.finite & ~motion.frozen
    delta = np.where(active[..., None], delta, 0.0)

    rf = terms.r_flow + np.einsum("hwij,hwj->hwi", terms.j_flow, delta[:, :, :2])
    rc = terms.r_cross + np.einsum("hwij,hwj->hwi", terms.j_cross, delta)
    total = float((wf * (rf * rf).sum(-1))[active].sum())
    total += float((wc * (rc * rc).sum(-1))[active].sum())
    total += float((psi * _smoothness_arg(motion.uvd + delta, terms.finite, params.lam))[terms.finite].sum())
    return total


def apply_system(system: LinearSystem, delta: np.ndarray) -> np.ndarray:
    """Matrix-vector product A delta, zero on inactive pixels."""
    h, w = system.active.shape
    out = np.einsum("hwij,hwj->hwi", system.diag, delta)
    comp = np.array([1.0, 1.0, system.lam])
    for k, (dy, dx) in enumerate(_N4):
        src = np.s_[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)]
        dst = np.s_[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)]
        out[dst] -= (system.edge[k][dst])[..., None] * comp * delta[src]
    out[~system.active] = 0.0
    return out


def sor_solve(
    system: LinearSystem, omega: float, sweeps: int
) -> tuple[np.ndarray, np.ndarray]:
    """Red-black block SOR from a zero start.

    Each sweep updates both colors; every pixel solves its own 3x3
    block exactly. Returns the increments and the residual norm after
    each sweep.
    """
    h, w = system.active.shape
    delta = np.zeros((h, w, 3))
    comp = np.array([1.0, 1.0, system.lam])
    ys, xs = np.mgrid[0:h, 0:w]
    parity = (ys + xs) % 2

    inv = np.zeros((h, w, 3, 3))
    inv[system.active] = np.linalg.inv(system.diag[system.active])

    residuals = np.empty(sweeps)
    for it in range(sweeps):
        for color in (0, 1):
            mask = system.active & (parity == color)
            rhs = system.b.copy()
            for k, (dy, dx) in enumerate(_N4):
                src = np.s_[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)]
                dst = np.s_[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)]
                rhs[dst] += (system.edge[k][dst])[..., None] * comp * delta[src]
            target = np.einsum("hwij,hwj->hwi", inv, rhs)
            delta[mask] += omega * (target[mask] - delta[mask])
        r = system.b - apply_system(system, delta)
        residuals[it] = np.sqrt((r[system.active] ** 2).sum())
    return delta, residuals


# -- public energy and driver -------------------------------------------------


def _to_grays(images):
    ref, temporal, _, cross = images
    return (
        to_gray(np.asarray(ref, dtype=np.float64)),
        to_gray(np.asarray(temporal, dtype=np.float64)),
        to_gray(np.asarray(cross, dtype=np.float64)),
    )


def energy(
    motion: MotionField,
    d0: np.ndarray,
    images,
    boundaries: np.ndarray,
    params: RefineParams = RefineParams(),
) -> float:
    """Refinement energy of a motion field.

    Data terms measure gradient constancy toward the temporal and cross
    views, each shifted by the Charbonnier offset so a perfect match
    contributes zero; out-of-bounds correspondences are masked out.
    Smoothness contributes phi * psi(s) per finite pixel.
    """
    grays = _to_grays(images)
    terms = _terms(motion, d0, grays, boundaries, params)
    g, eps = params.gamma, params.eps

    def data(r, beta):
        s = (r * r).sum(-1)
        val = _charbonnier(g * s, eps) - eps
        return float(val[beta].sum())

    total = data(terms.r_flow, terms.beta_flow) + data(terms.r_cross, terms.beta_cross)
    s = _smoothness_arg(motion.uvd, terms.finite, params.lam)
    total += float((terms.phi * _charbonnier(s, eps))[terms.finite].sum())
    return total


def refine_variational(
    motion: MotionField,
    d0: np.ndarray,
    images,
    boundaries: np.ndarray,
    params: RefineParams = RefineParams(),
) -> MotionField:
    """Iterative relinearization with lagged weights and block SOR.

    Frozen pixels are returned bit-identical. If any solve produces a
    non-finite increment the input field is returned unchanged.
    """
    grays = _to_grays(images)
    current = MotionField(uvd=motion.uvd.copy(), frozen=motion.frozen.copy())
    for _ in range(params.outer_iterations):
        terms = _terms(current, d0, grays, boundaries, params)
        delta = np.zeros_like(current.uvd)
        for _ in range(params.inner_iterations):
            system = _build_system(current, terms, delta, params)
            delta, _res = sor_solve(system, params.omega, params.sor_iterations)
        if not np.isfinite(delta[system.active]).all():
            warnings.warn("refinement produced non-finite increments; keeping input")
            return MotionField(uvd=motion.uvd.copy(), frozen=motion.frozen.copy())
        current.uvd[system.active] += delta[system.active]
    return current


def refine(
    field: np.ndarray,
    images,
    boundaries: np.ndarray,
    params: RefineParams = RefineParams(),
) -> np.ndarray:
    """Refine a scene flow field in place of its (u, v, d1) components."""
    motion, d0 = make_motion_field(field)
    refined = refine_variational(motion, d0, images, boundaries, params)
    return merge_motion_field(refined, d0)
