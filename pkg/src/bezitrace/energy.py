"""Vectorization objective: raster fidelity plus four bezigon priors.

Geometry lives in unit-square coordinates, but lengths entering the energy
(priors and the initial arc length) are measured in pixels so that the prior
weights keep their meaning across resolutions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import (
    DEFAULT_INTERSECTION_TOL,
    Bezigon,
    _fixed_rule,
    bernstein_deriv,
    fold_segment_grad,
    self_intersections,
    smooth_length,
)
from .raster import RasterGrid, composite, coverage, coverage_gradient

EPS_LEN = 1e-9


@dataclass(frozen=True)
class VectorShape:
    bezigon: Bezigon
    color: np.ndarray

    def __post_init__(self):
        c = np.array(self.color, dtype=float).reshape(-1)
        if np.any(c < 0) or np.any(c > 1) or not np.all(np.isfinite(c)):
            raise ValueError("color channels must lie in [0, 1]")
        c.setflags(write=False)
        object.__setattr__(self, "color", c)

    def replace(self, bezigon=None, color=None) -> "VectorShape":
        return VectorShape(self.bezigon if bezigon is None else bezigon,
                           self.color if color is None else color)


@dataclass(frozen=True)
class EnergyWeights:
    spt: float = 1.0
    apt: float = 0.08
    hpt: float = 0.1
    lpt: float = 0.1

    def __post_init__(self):
        if min(self.spt, self.apt, self.hpt, self.lpt) < 0:
            raise ValueError("prior weights must be non-negative")

    def as_tuple(self):
        return (self.spt, self.apt, self.hpt, self.lpt)

    def in_unit_coords(self, unit: float) -> "EnergyWeights":
        """Weights acting on unit-square priors equivalent to these weights on
        priors measured with ``unit`` pixels per unit length."""
        return EnergyWeights(self.spt * unit, self.apt, self.hpt / unit, self.lpt * unit)


PAPER_WEIGHTS = EnergyWeights()
NO_PRIORS = EnergyWeights(0.0, 0.0, 0.0, 0.0)


@dataclass
class EnergyContext:
    """Everything the data term needs besides the shape.

    ``image`` and ``background`` are ``(size, size, channels)`` arrays on the
    dyadic grid; ``mask`` selects the pixels that belong to the input lattice.
    ``pixel_weight`` optionally scales each pixel's squared residual, e.g. by
    the visible fraction of a pixel partly hidden under other shapes.
    """

    image: np.ndarray
    grid: RasterGrid
    background: np.ndarray
    l0: float
    mask: np.ndarray
    normalize: bool = False
    pixel_weight: np.ndarray | None = None

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=float)
        if self.image.ndim == 2:
            self.image = self.image[..., None]
        if self.image.shape[:2] != self.grid.shape:
            raise ValueError(f"image shape {self.image.shape[:2]} does not match grid {self.grid.shape}")
        bg = np.asarray(self.background, dtype=float)
        self.background = np.broadcast_to(bg, self.image.shape) if bg.ndim <= 1 else bg
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.grid.shape:
            raise ValueError("mask dimensions must match the grid")
        self.weight = self.mask.astype(float)
        if self.pixel_weight is not None:
            pw = np.asarray(self.pixel_weight, dtype=float)
            if pw.shape != self.grid.shape or np.any(pw < 0):
                raise ValueError("pixel_weight must be non-negative and match the grid")
            self.weight = self.weight * pw
        if not self.l0 > 0:
            raise ValueError("l0 must be positive")

    @property
    def unit(self) -> float:
        """Pixels per unit-square length."""
        return float(self.grid.size)

    @property
    def scale(self) -> float:
        return 1.0 / self.l0 if self.normalize else 1.0

    @classmethod
    def build(cls, image, initial: Bezigon, background=None, mask=None, normalize=False):
        """Context for a square dyadic ``image`` and an initial bezigon."""
        img = np.asarray(image, dtype=float)
        if img.ndim == 2:
            img = img[..., None]
        grid = RasterGrid.for_image(img.shape[1], img.shape[0])
        if img.shape[:2] != grid.shape:
            raise ValueError("image must already be padded to a dyadic square")
        if mask is None:
            mask = np.ones(grid.shape, dtype=bool)
        if background is None:
            background = estimate_background(img, coverage(initial, grid), mask)
        return cls(img, grid, background, smooth_length(initial) * grid.size, mask, normalize)


@dataclass
class EnergyBreakdown:
    e_data: float
    e_spt: float
    e_apt: float
    e_hpt: float
    e_lpt: float
    total: float
    flags: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {"e_data": self.e_data, "e_spt": self.e_spt, "e_apt": self.e_apt,
                "e_hpt": self.e_hpt, "e_lpt": self.e_lpt, "total": self.total,
                "flags": list(self.flags)}


def estimate_background(image, alpha, mask=None, dilate_px: int = 2):
    """Mean colour of the pixels well outside the initial shape."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[..., None]
    inside = ndimage.binary_dilation(np.asarray(alpha) > 0, iterations=dilate_px)
    sel = ~inside
    if mask is not None:
        sel &= mask
    if not sel.any():
        sel = np.ones(inside.shape, dtype=bool) if mask is None else mask
    return img[sel].mean(axis=0)


# --------------------------------------------------------------------------
# data term


def render(shape: VectorShape, ctx: EnergyContext, alpha=None) -> np.ndarray:
    if alpha is None:
        alpha = coverage(shape.bezigon, ctx.grid)
    return composite(alpha, shape.color, ctx.background)


def data_energy(shape: VectorShape, ctx: EnergyContext, alpha=None) -> float:
    """Scaled squared difference between the rendered shape and the input."""
    r = render(shape, ctx, alpha) - ctx.image
    return ctx.scale * float(np.einsum("ij,ijc,ijc->", ctx.weight, r, r))


def residual_weights(shape: VectorShape, ctx: EnergyContext, alpha: np.ndarray):
    """``dE_data / d alpha`` per pixel and the colour gradient."""
    r = (render(shape, ctx, alpha) - ctx.image) * ctx.weight[..., None]
    a = np.clip(alpha, 0.0, 1.0)
    live = (alpha > -1e-12) & (alpha < 1.0 + 1e-12)
    w = 2.0 * ctx.scale * np.einsum("ijc,ijc->ij", r, shape.color - ctx.background) * live
    gc = 2.0 * ctx.scale * np.einsum("ij,ijc->c", a, r)
    return w, gc


def data_gradient(shape: VectorShape, ctx: EnergyContext):
    """``(geometry_grad, color_grad, degenerate_mask)`` of :func:`data_energy`."""
    alpha = coverage(shape.bezigon, ctx.grid)
    w, gc = residual_weights(shape, ctx, alpha)
    cg = coverage_gradient(shape.bezigon, ctx.grid, w)
    return cg.grad, gc, cg.degenerate


# --------------------------------------------------------------------------
# priors


def _joint_vectors(ctrl: np.ndarray, joints):
    """Incoming/outgoing handle vectors at the given joint indices."""
    n = ctrl.shape[0]
    joints = np.asarray(joints)
    a = ctrl[joints, 0] - ctrl[(joints - 1) % n, 2]
    b = ctrl[joints, 1] - ctrl[joints, 0]
    return a, b


def apt_terms(ctrl: np.ndarray, joints=None, with_grad=False):
    """Turning angle at each joint, optionally with the gradient.

    Returns ``(angles, grad, degenerate)`` where ``grad`` has shape ``(N, 3, 2)``.
    """
    n = ctrl.shape[0]
    if joints is None:
        joints = np.arange(n)
    joints = np.asarray(joints)
    a, b = _joint_vectors(ctrl, joints)
    la = np.hypot(a[:, 0], a[:, 1])
    lb = np.hypot(b[:, 0], b[:, 1])
    degenerate = (la < EPS_LEN) | (lb < EPS_LEN)
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.einsum("ij,ij->i", a, b)
    ang = np.arctan2(np.abs(cross), dot)
    if np.any(degenerate):
        cosv = dot / (np.maximum(la, EPS_LEN) * np.maximum(lb, EPS_LEN))
        ang = np.where(degenerate, np.arccos(np.clip(cosv, -1.0, 1.0)), ang)
    if not with_grad:
        return ang, None, degenerate
    den = cross * cross + dot * dot
    den = np.where(den > 0, den, 1.0)
    sc = np.sign(cross)
    # d angle / d a and d angle / d b
    dcross_a = np.stack([b[:, 1], -b[:, 0]], axis=1)
    dcross_b = np.stack([-a[:, 1], a[:, 0]], axis=1)
    ga = ((dot * sc)[:, None] * dcross_a - np.abs(cross)[:, None] * b) / den[:, None]
    gb = ((dot * sc)[:, None] * dcross_b - np.abs(cross)[:, None] * a) / den[:, None]
    ga[degenerate] = 0.0
    gb[degenerate] = 0.0
    g = np.zeros_like(ctrl)
    np.add.at(g, (joints, 0), ga - gb)
    np.add.at(g, ((joints - 1) % n, 2), -ga)
    np.add.at(g, (joints, 1), gb)
    return ang, g, degenerate


def hpt_terms(ctrl: np.ndarray, segments=None, with_grad=False):
    """Reciprocal handle lengths: two handles per segment.

    Returns ``(values (M, 2), grad, degenerate)``.
    """
    n = ctrl.shape[0]
    if segments is None:
        segments = np.arange(n)
    segments = np.asarray(segments)
    h_out = ctrl[segments, 1] - ctrl[segments, 0]
    h_in = ctrl[(segments + 1) % n, 0] - ctrl[segments, 2]
    lo = np.hypot(h_out[:, 0], h_out[:, 1])
    li = np.hypot(h_in[:, 0], h_in[:, 1])
    degenerate = (lo < EPS_LEN) | (li < EPS_LEN)
    vals = np.stack([1.0 / np.maximum(lo, EPS_LEN), 1.0 / np.maximum(li, EPS_LEN)], axis=1)
    if not with_grad:
        return vals, None, degenerate
    go = np.where((lo >= EPS_LEN)[:, None], -h_out / np.maximum(lo, EPS_LEN)[:, None] ** 3, 0.0)
    gi = np.where((li >= EPS_LEN)[:, None], -h_in / np.maximum(li, EPS_LEN)[:, None] ** 3, 0.0)
    g = np.zeros_like(ctrl)
    np.add.at(g, (segments, 1), go)
    np.add.at(g, (segments, 0), -go)
    np.add.at(g, ((segments + 1) % n, 0), gi)
    np.add.at(g, (segments, 2), -gi)
    return vals, g, degenerate


_UNIT_T, _UNIT_W = _fixed_rule(0.0, 1.0)
_UNIT_DB = bernstein_deriv(_UNIT_T)


def lpt_terms(segs: np.ndarray, with_grad=False):
    """Length of each full segment by the fixed quadrature rule.

    ``segs`` is ``(M, 4, 2)``; the gradient is per segment ``(M, 4, 2)``.
    """
    v = np.einsum("qi,mic->mqc", _UNIT_DB, segs)
    speed = np.hypot(v[..., 0], v[..., 1])
    lengths = speed @ _UNIT_W
    if not with_grad:
        return lengths, None
    unit = v / np.maximum(speed, 1e-300)[..., None]
    g = np.einsum("q,qi,mqc->mic", _UNIT_W, _UNIT_DB, unit)
    return lengths, g


def e_apt(bezigon: Bezigon) -> float:
    """Sum of turning angles (radians) over all joints."""
    return float(np.sum(apt_terms(bezigon.ctrl)[0]))


def e_hpt(bezigon: Bezigon) -> float:
    """Inverse-barrier sum over all 2N handle lengths."""
    return float(np.sum(hpt_terms(bezigon.ctrl)[0]))


def e_lpt(bezigon: Bezigon) -> float:
    """Total curve length."""
    return float(np.sum(lpt_terms(bezigon.segments)[0]))


def e_spt(bezigon: Bezigon, tol: float = DEFAULT_INTERSECTION_TOL, pairs=None) -> float:
    """Sum over self-crossings of the shorter arc closed off by the crossing."""
    return spt_terms(bezigon, tol, pairs)[0]


def spt_terms(bezigon: Bezigon, tol: float = DEFAULT_INTERSECTION_TOL, pairs=None, with_grad=False):
    """Self-intersection energy, optionally with its gradient for fixed crossing parameters."""
    if pairs is None:
        pairs = self_intersections(bezigon, tol)
    grad = np.zeros(6 * bezigon.n) if with_grad else None
    if not pairs:
        return 0.0, grad, pairs
    if with_grad:
        total, g_total = smooth_length(bezigon, with_grad=True)
    else:
        total = smooth_length(bezigon)
    value = 0.0
    for p in pairs:
        if with_grad:
            part, g_part = smooth_length(bezigon, p.t1, p.t2, with_grad=True)
        else:
            part = smooth_length(bezigon, p.t1, p.t2)
        if part <= total - part:
            value += part
            if with_grad:
                grad += g_part
        else:
            value += total - part
            if with_grad:
                grad += g_total - g_part
    return value, grad, pairs


@dataclass
class PriorGradient:
    grad: np.ndarray
    degenerate: np.ndarray
    flags: tuple


def prior_values(bezigon: Bezigon, tol: float = DEFAULT_INTERSECTION_TOL):
    spt, _, pairs = spt_terms(bezigon, tol)
    apt, _, da = apt_terms(bezigon.ctrl)
    hpt, _, dh = hpt_terms(bezigon.ctrl)
    lpt, _ = lpt_terms(bezigon.segments)
    flags = _prior_flags(da, dh)
    return float(spt), float(apt.sum()), float(hpt.sum()), float(lpt.sum()), flags


def _prior_flags(da, dh):
    flags = []
    if np.any(da):
        flags.append("apt_degenerate_handle")
    if np.any(dh):
        flags.append("hpt_zero_handle")
    return tuple(flags)


def prior_gradient(bezigon: Bezigon, weights: EnergyWeights,
                   tol: float = DEFAULT_INTERSECTION_TOL) -> PriorGradient:
    """Weighted gradient of the four priors in the flat 6N layout.

    The self-intersection part holds the crossing parameters fixed.
    """
    ctrl = bezigon.ctrl
    n = bezigon.n
    g = np.zeros(6 * n)
    degenerate = np.zeros(6 * n, dtype=bool)
    da = dh = np.zeros(0, dtype=bool)
    if weights.spt:
        _, gs, _ = spt_terms(bezigon, tol, with_grad=True)
        g += weights.spt * gs
    if weights.apt:
        _, ga, da = apt_terms(ctrl, with_grad=True)
        g += weights.apt * ga.reshape(-1)
    if weights.hpt:
        _, gh, dh = hpt_terms(ctrl, with_grad=True)
        g += weights.hpt * gh.reshape(-1)
    if weights.lpt:
        _, gl = lpt_terms(bezigon.segments, with_grad=True)
        g += weights.lpt * fold_segment_grad(gl)
    if np.any(da):
        joints = np.nonzero(da)[0]
        mark = np.zeros((n, 3), dtype=bool)
        mark[joints, :2] = True
        mark[(joints - 1) % n, 2] = True
        degenerate |= np.repeat(mark.reshape(-1), 2)
    return PriorGradient(g, degenerate, _prior_flags(da, dh))


# --------------------------------------------------------------------------
# total


def total_energy(shape: VectorShape, ctx: EnergyContext, weights: EnergyWeights = PAPER_WEIGHTS,
                 tol: float = DEFAULT_INTERSECTION_TOL) -> EnergyBreakdown:
    """Data term plus weighted priors, with every term reported separately."""
    e_data = data_energy(shape, ctx)
    spt, apt, hpt, lpt, flags = prior_values(shape.bezigon, tol)
    u = ctx.unit
    spt, hpt, lpt = spt * u, hpt / u, lpt * u
    total = (e_data + weights.spt * spt + weights.apt * apt
             + weights.hpt * hpt + weights.lpt * lpt)
    return EnergyBreakdown(e_data, spt, apt, hpt, lpt, total, flags)


def total_gradient(shape: VectorShape, ctx: EnergyContext, weights: EnergyWeights = PAPER_WEIGHTS,
                   tol: float = DEFAULT_INTERSECTION_TOL):
    """``(geometry_grad, color_grad)`` of :func:`total_energy`."""
    gd, gc, _ = data_gradient(shape, ctx)
    pg = prior_gradient(shape.bezigon, weights.in_unit_coords(ctx.unit), tol)
    return gd + pg.grad, gc
