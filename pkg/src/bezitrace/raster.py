"""Analytic Haar-wavelet rasterization of bezigons and its exact derivatives.

The image domain is the unit square, split into ``2**d x 2**d`` pixels.  Pixel
``(row, col)`` covers ``x in [col, col+1] / 2**d`` and ``y in [row, row+1] / 2**d``.
Coverage of a region is expanded in the 2D Haar basis: one scaling coefficient
at scale 0 plus three wavelet coefficients per cell at scales ``0 .. d-1``.
Each coefficient is a line integral over the boundary (divergence theorem), and
is integrated in closed form after splitting every segment wherever it crosses
a pixel line, so that every Haar factor is constant on each piece.

Coefficient arrays are stored per scale ``s`` as dense ``(2**s, 2**s)`` arrays
indexed ``[k_y, k_x]``.

Positively oriented curves (positive signed area in the x-y frame; with y
pointing down this is clockwise on screen) give positive coverage.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as P

from .geometry import POWER_BASIS, Bezigon, bernstein, derivative_roots, flatten, fold_segment_grad

MAX_DEPTH = 14
TANGENCY_EPS = 1e-9
_BISECT_ITERS = 12
_NEWTON_ITERS = 6


class DomainError(ValueError):
    """Raised when a curve leaves the unit square."""


@dataclass(frozen=True)
class RasterGrid:
    d: int

    def __post_init__(self):
        if not 0 <= self.d <= MAX_DEPTH:
            raise ValueError(f"depth must be in [0, {MAX_DEPTH}], got {self.d}")

    @property
    def size(self) -> int:
        return 1 << self.d

    @property
    def shape(self) -> tuple[int, int]:
        return (self.size, self.size)

    @classmethod
    def for_image(cls, width: int, height: int) -> "RasterGrid":
        """Smallest dyadic grid containing a ``width x height`` image."""
        side = max(width, height, 1)
        return cls(int(np.ceil(np.log2(side))))


class HaarIndex(NamedTuple):
    s: int
    kx: int
    ky: int
    kind: tuple[int, int]


@dataclass
class CoefficientSet:
    """Haar coefficients of a coverage function on one grid."""

    grid: RasterGrid
    c00: float = 0.0
    c10: list = field(default_factory=list)
    c01: list = field(default_factory=list)
    c11: list = field(default_factory=list)

    @classmethod
    def zeros(cls, grid: RasterGrid) -> "CoefficientSet":
        shapes = [(1 << s, 1 << s) for s in range(grid.d)]
        return cls(grid, 0.0, [np.zeros(sh) for sh in shapes],
                   [np.zeros(sh) for sh in shapes], [np.zeros(sh) for sh in shapes])

    def __getitem__(self, idx: HaarIndex) -> float:
        if idx.kind == (0, 0):
            if idx.s != 0 or idx.kx != 0 or idx.ky != 0:
                raise KeyError(idx)
            return self.c00
        table = {(1, 0): self.c10, (0, 1): self.c01, (1, 1): self.c11}[idx.kind]
        return float(table[idx.s][idx.ky, idx.kx])

    def __add__(self, other: "CoefficientSet") -> "CoefficientSet":
        _check_grid(self.grid, other.grid)
        return CoefficientSet(
            self.grid, self.c00 + other.c00,
            [a + b for a, b in zip(self.c10, other.c10)],
            [a + b for a, b in zip(self.c01, other.c01)],
            [a + b for a, b in zip(self.c11, other.c11)],
        )

    def __neg__(self) -> "CoefficientSet":
        return CoefficientSet(self.grid, -self.c00, [-a for a in self.c10],
                              [-a for a in self.c01], [-a for a in self.c11])

    def flat(self) -> np.ndarray:
        parts = [np.array([self.c00])]
        for s in range(self.grid.d):
            parts += [self.c10[s].ravel(), self.c01[s].ravel(), self.c11[s].ravel()]
        return np.concatenate(parts)


def _check_grid(a: RasterGrid, b: RasterGrid):
    if a.d != b.d:
        raise ValueError(f"grid mismatch: depth {a.d} vs {b.d}")


# --------------------------------------------------------------------------
# cubic roots


def cubic_roots(coeffs, interval=(0.0, 1.0)):
    """Real roots of ``c0 + c1 t + c2 t**2 + c3 t**3`` inside ``interval``.

    Closed-form (trigonometric / Cardano) solution followed by one Newton step.
    Returns ``(roots, identically_zero)``; roots are sorted with repeated roots
    collapsed.
    """
    c = np.asarray(coeffs, dtype=float)
    lo, hi = interval
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.empty(0), True
    c = c / scale
    raw = _solve_cubic(*c)
    out = []
    dc = np.array([c[1], 2 * c[2], 3 * c[3]])
    for r in raw:
        f = c[0] + r * (c[1] + r * (c[2] + r * c[3]))
        fp = dc[0] + r * (dc[1] + r * dc[2])
        if fp != 0.0:
            step = f / fp
            if abs(step) < 1e-6 * max(1.0, abs(r)):
                r = r - step
        if lo - 1e-12 <= r <= hi + 1e-12:
            out.append(min(max(r, lo), hi))
    out.sort()
    merged = []
    for r in out:
        if not merged or abs(r - merged[-1]) > 1e-9:
            merged.append(r)
    return np.array(merged), False


def _solve_cubic(c0, c1, c2, c3):
    if abs(c3) < 1e-14:
        if abs(c2) < 1e-14:
            return [] if abs(c1) < 1e-14 else [-c0 / c1]
        disc = c1 * c1 - 4 * c2 * c0
        if disc < 0:
            return []
        sq = np.sqrt(disc)
        q = -0.5 * (c1 + np.copysign(sq, c1))
        roots = [q / c2]
        if q != 0:
            roots.append(c0 / q)
        return roots
    a, b, cc = c2 / c3, c1 / c3, c0 / c3
    q = (a * a - 3 * b) / 9
    r = (2 * a ** 3 - 9 * a * b + 27 * cc) / 54
    if r * r < q ** 3:
        th = np.arccos(np.clip(r / np.sqrt(q ** 3), -1.0, 1.0))
        m = -2 * np.sqrt(q)
        return [m * np.cos(th / 3) - a / 3,
                m * np.cos((th + 2 * np.pi) / 3) - a / 3,
                m * np.cos((th - 2 * np.pi) / 3) - a / 3]
    big = -np.copysign(np.cbrt(abs(r) + np.sqrt(r * r - q ** 3)), r)
    small = q / big if big != 0 else 0.0
    roots = [big + small - a / 3]
    # double root when the discriminant vanishes
    if abs(r * r - q ** 3) <= 1e-14 * max(1.0, abs(r * r)):
        roots.append(-0.5 * (big + small) - a / 3)
    return roots


# --------------------------------------------------------------------------
# segment decomposition


@dataclass
class _Crossings:
    seg: np.ndarray     # segment id
    t: np.ndarray       # local parameter
    line: np.ndarray    # integer index m of the line coord = m / 2**d
    sign: np.ndarray    # sign of the crossing coordinate's derivative
    weight: np.ndarray  # 1, or 1/2 at a segment endpoint
    ok: np.ndarray      # False for tangential crossings (skipped)


def _horner(t, pc):
    return ((pc[3] * t + pc[2]) * t + pc[1]) * t + pc[0]


def _bisect_monotone(pc, levels, ta, tb, increasing):
    """Roots of ``poly(t) == level`` on monotone brackets.

    A few bisection steps shrink the bracket, then safeguarded Newton steps
    finish; a Newton step leaving the bracket falls back to its midpoint.
    """
    lo = ta.copy()
    hi = tb.copy()
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        right = (_horner(mid, pc) < levels) == increasing
        lo = np.where(right, mid, lo)
        hi = np.where(right, hi, mid)
    dpc = (pc[1], 2 * pc[2], 3 * pc[3])
    t = 0.5 * (lo + hi)
    for _ in range(_NEWTON_ITERS):
        f = _horner(t, pc) - levels
        right = (f < 0) == increasing
        lo = np.where(right, t, lo)
        hi = np.where(right, hi, t)
        df = (dpc[2] * t + dpc[1]) * t + dpc[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - f / df
        inside = np.isfinite(tn) & (tn >= lo) & (tn <= hi)
        t = np.where(inside, tn, 0.5 * (lo + hi))
    return t


def _axis_crossings(ctrl1d, n):
    """Crossings of one coordinate of a cubic with the lines ``m / n``.

    Returns ``(t, m, dv, weight, extrema)``; extrema are returned separately
    as breaks.
    """
    return _axis_crossings_many([ctrl1d], n)[0]


def _axis_crossings_many(ctrls, n):
    """:func:`_axis_crossings` for several cubics, solved in one batch."""
    items = []
    job_item, job_m, job_a, job_b, job_inc = [], [], [], [], []
    for idx, ctrl1d in enumerate(ctrls):
        pc = POWER_BASIS @ ctrl1d * n          # scaled so that lines sit at integers
        ext = derivative_roots(ctrl1d)
        breaks = np.concatenate([[0.0], ext, [1.0]])
        vals = _horner(breaks, pc)
        # endpoints exactly, so that joints on a pixel line are seen by both segments
        vals[0] = ctrl1d[0] * n
        vals[-1] = ctrl1d[3] * n
        items.append((pc, breaks, vals))
        # interior crossings of each monotone interval
        for a, b, va, vb in zip(breaks[:-1], breaks[1:], vals[:-1], vals[1:]):
            m = np.arange(np.floor(min(va, vb)) + 1, np.ceil(max(va, vb)), dtype=float)
            if len(m) == 0:
                continue
            job_item.append(np.full(len(m), idx))
            job_m.append(m)
            job_a.append(np.full(len(m), a))
            job_b.append(np.full(len(m), b))
            job_inc.append(np.full(len(m), vb > va))
    if job_item:
        item = np.concatenate(job_item)
        pcs = np.array([it[0] for it in items])[item].T
        m_all = np.concatenate(job_m)
        t_all = _bisect_monotone(pcs, m_all, np.concatenate(job_a), np.concatenate(job_b),
                                 np.concatenate(job_inc))
    else:
        item = np.empty(0, dtype=int)
    out = []
    for idx, (pc, breaks, vals) in enumerate(items):
        sel = item == idx
        ts = [t_all[sel]] if sel.any() else []
        ms = [m_all[sel]] if sel.any() else []
        ws = [np.ones(int(sel.sum()))] if sel.any() else []
        # crossings that sit exactly on a break point
        for k, (t, v) in enumerate(zip(breaks, vals)):
            if v == np.floor(v):
                ts.append(np.array([t]))
                ms.append(np.array([v]))
                ws.append(np.array([0.5 if k in (0, len(breaks) - 1) else 1.0]))
        if not ts:
            out.append((np.empty(0), np.empty(0, int), np.empty(0), np.empty(0), breaks[1:-1]))
            continue
        t = np.concatenate(ts)
        m = np.concatenate(ms).astype(np.int64)
        w = np.concatenate(ws)
        dv = ((3.0 * pc[3] * t + 2.0 * pc[2]) * t + pc[1]) / n
        out.append((t, m, dv, w, breaks[1:-1]))
    return out


@dataclass
class _Decomposition:
    n_seg: int
    seg: np.ndarray    # piece -> segment id
    ta: np.ndarray
    tb: np.ndarray
    ix: np.ndarray     # finest cell of the piece
    iy: np.ndarray
    xc: _Crossings     # crossings of vertical lines (x = m / n)
    yc: _Crossings     # crossings of horizontal lines
    pcs: np.ndarray    # power coefficients per segment (M, 4, 2)


def _check_domain(segs):
    for seg in segs:
        for c in range(2):
            ts = np.concatenate([[0.0, 1.0], derivative_roots(seg[:, c])])
            v = bernstein(ts) @ seg[:, c]
            if v.min() < 0.0 or v.max() > 1.0:
                raise DomainError("curve leaves the unit square; normalise or pad the input")


def _decompose(segs: np.ndarray, grid: RasterGrid) -> _Decomposition:
    segs = np.asarray(segs, dtype=float)
    _check_domain(segs)
    n = grid.size
    pcs = np.einsum("ki,jic->jkc", POWER_BASIS, segs)
    piece_cols = {k: [] for k in ("seg", "ta", "tb")}
    cross = {0: [], 1: []}
    found = _axis_crossings_many([seg[:, axis] for seg in segs for axis in (0, 1)], n)
    for j, seg in enumerate(segs):
        bps = [np.array([0.0, 1.0])]
        for axis in (0, 1):
            t, m, dv, w, ext = found[2 * j + axis]
            bps += [t, ext]
            cross[axis].append((np.full(len(t), j), t, m, dv, w))
        b = np.unique(np.concatenate(bps))
        piece_cols["seg"].append(np.full(len(b) - 1, j))
        piece_cols["ta"].append(b[:-1])
        piece_cols["tb"].append(b[1:])
    seg_id = np.concatenate(piece_cols["seg"]).astype(np.int64)
    ta = np.concatenate(piece_cols["ta"])
    tb = np.concatenate(piece_cols["tb"])
    keep = tb > ta
    seg_id, ta, tb = seg_id[keep], ta[keep], tb[keep]
    mid = 0.5 * (ta + tb)
    pm = np.einsum("pk,pkc->pc", mid[:, None] ** np.arange(4), pcs[seg_id])
    ix = np.clip(np.floor(pm[:, 0] * n), 0, n - 1).astype(np.int64)
    iy = np.clip(np.floor(pm[:, 1] * n), 0, n - 1).astype(np.int64)

    def pack(rows):
        if not rows:
            e = np.empty(0)
            return _Crossings(e.astype(int), e, e.astype(int), e, e, e.astype(bool))
        sid, t, m, dv, w = (np.concatenate(x) for x in zip(*rows))
        return _Crossings(sid.astype(np.int64), t, m.astype(np.int64), np.sign(dv), w,
                          np.abs(dv) >= TANGENCY_EPS)

    return _Decomposition(len(segs), seg_id, ta, tb, ix, iy, pack(cross[0]), pack(cross[1]), pcs)


def _pder(a):
    a = np.asarray(a, dtype=float)
    return a[1:] * np.arange(1, len(a))


def _antiderivative_diff(poly_per_seg, seg_id, ta, tb):
    """``F(tb) - F(ta)`` for per-segment polynomials given as ``(M, K)`` arrays."""
    poly = np.asarray(poly_per_seg, dtype=float)
    anti = np.zeros((poly.shape[0], poly.shape[1] + 1))
    anti[:, 1:] = poly / np.arange(1, poly.shape[1] + 1)
    ca = anti[seg_id]
    k = np.arange(anti.shape[1])
    return np.sum(ca * (tb[:, None] ** k - ta[:, None] ** k), axis=1)


def monotone_splits(segment, grid: RasterGrid) -> np.ndarray:
    """Sorted parameters in (0, 1) where the segment crosses a pixel line or
    reaches a coordinate extremum."""
    seg = np.asarray(segment, dtype=float)
    parts = []
    for axis in (0, 1):
        t, _, _, _, ext = _axis_crossings(seg[:, axis], grid.size)
        parts += [t, ext]
    b = np.unique(np.concatenate(parts)) if parts else np.empty(0)
    return b[(b > 0.0) & (b < 1.0)]


# --------------------------------------------------------------------------
# forward transform


def _coefficients_from_segments(segs, grid: RasterGrid) -> CoefficientSet:
    dec = _decompose(segs, grid)
    return _coefficients(dec, grid)


def _coefficients(dec: _Decomposition, grid: RasterGrid) -> CoefficientSet:
    out = CoefficientSet.zeros(grid)
    if len(dec.seg) == 0:
        return out
    px = dec.pcs[:, :, 0]
    py = dec.pcs[:, :, 1]
    xy_int = np.array([np.convolve(a, _pder(b)) for a, b in zip(px, py)])
    area = _antiderivative_diff(xy_int, dec.seg, dec.ta, dec.tb)
    k = np.arange(4)
    xa = np.sum(px[dec.seg] * dec.ta[:, None] ** k, axis=1)
    xb = np.sum(px[dec.seg] * dec.tb[:, None] ** k, axis=1)
    ya = np.sum(py[dec.seg] * dec.ta[:, None] ** k, axis=1)
    yb = np.sum(py[dec.seg] * dec.tb[:, None] ** k, axis=1)
    dx = xb - xa
    dy = yb - ya
    other = (xb * yb - xa * ya) - area     # \int Y X' dt
    out.c00 = float(np.sum(area))
    d = grid.d
    for s in range(d):
        ks = 1 << s
        shift = d - s
        kx = dec.ix >> shift
        ky = dec.iy >> shift
        qx = (dec.ix >> (shift - 1)) & 1
        qy = (dec.iy >> (shift - 1)) & 1
        sx = 1 - 2 * qx
        sy = 1 - 2 * qy
        t10 = qx * dy + sx * (ks * area - kx * dy)
        t01 = -(qy * dx + sy * (ks * other - ky * dx))
        cell = ky * ks + kx
        out.c10[s] = np.bincount(cell, t10, ks * ks).reshape(ks, ks)
        out.c11[s] = np.bincount(cell, sy * t10, ks * ks).reshape(ks, ks)
        out.c01[s] = np.bincount(cell, t01, ks * ks).reshape(ks, ks)
    return out


def wavelet_coefficients(bezigon: Bezigon, grid: RasterGrid) -> CoefficientSet:
    """Haar coefficients of the region enclosed by ``bezigon`` (unit-square coordinates)."""
    return _coefficients_from_segments(bezigon.segments, grid)


def reconstruct(coeffs: CoefficientSet, grid: RasterGrid) -> np.ndarray:
    """Per-pixel coverage: the Haar synthesis evaluated on the finest cells."""
    _check_grid(coeffs.grid, grid)
    alpha = np.full((1, 1), coeffs.c00)
    sgn = np.array([1.0, -1.0])
    for s in range(grid.d):
        ks = 1 << s
        detail = (sgn[None, None, None, :] * coeffs.c10[s][:, None, :, None]
                  + sgn[None, :, None, None] * coeffs.c01[s][:, None, :, None]
                  + sgn[None, :, None, None] * sgn[None, None, None, :] * coeffs.c11[s][:, None, :, None])
        alpha = (alpha[:, None, :, None] + ks * detail).reshape(2 * ks, 2 * ks)
    return alpha


def coverage(bezigon: Bezigon, grid: RasterGrid) -> np.ndarray:
    return reconstruct(wavelet_coefficients(bezigon, grid), grid)


def analysis(weights: np.ndarray, grid: RasterGrid) -> CoefficientSet:
    """Adjoint of :func:`reconstruct`: ``sum(w * reconstruct(c)) == dot(analysis(w), c)``."""
    w = np.asarray(weights, dtype=float)
    if w.shape != grid.shape:
        raise ValueError(f"weights shape {w.shape} does not match grid {grid.shape}")
    out = CoefficientSet.zeros(grid)
    out.c00 = float(w.sum())
    sgn = np.array([1.0, -1.0])
    for s in range(grid.d):
        ks = 1 << s
        m = 1 << (grid.d - s - 1)
        q = w.reshape(ks, 2, m, ks, 2, m).sum(axis=(2, 5))   # [ky, qy, kx, qx]
        q = q.transpose(0, 2, 1, 3)                           # [ky, kx, qy, qx]
        out.c10[s] = ks * np.einsum("abij,j->ab", q, sgn)
        out.c01[s] = ks * np.einsum("abij,i->ab", q, sgn)
        out.c11[s] = ks * np.einsum("abij,i,j->ab", q, sgn, sgn)
    return out


def _window_signs(idx: np.ndarray, d: int, s: int):
    """Cell index and +-1 half sign of pixel indices at scale ``s``."""
    shift = d - s
    return idx >> shift, 1.0 - 2.0 * ((idx >> (shift - 1)) & 1)


def reconstruct_window(coeffs: CoefficientSet, grid: RasterGrid, rows: slice, cols: slice) -> np.ndarray:
    """:func:`reconstruct` restricted to a rectangular block of pixels."""
    _check_grid(coeffs.grid, grid)
    r = np.arange(rows.start, rows.stop)
    c = np.arange(cols.start, cols.stop)
    alpha = np.full((len(r), len(c)), coeffs.c00)
    for s in range(grid.d):
        ky, sy = _window_signs(r, grid.d, s)
        kx, sx = _window_signs(c, grid.d, s)
        c10 = coeffs.c10[s][np.ix_(ky, kx)]
        c01 = coeffs.c01[s][np.ix_(ky, kx)]
        c11 = coeffs.c11[s][np.ix_(ky, kx)]
        alpha += (1 << s) * (sx[None, :] * (c10 + sy[:, None] * c11) + sy[:, None] * c01)
    return alpha


def analysis_window(weights: np.ndarray, grid: RasterGrid, rows: slice, cols: slice) -> CoefficientSet:
    """:func:`analysis` of weights that vanish outside a rectangular block.

    ``weights`` holds only the block; cost is proportional to its area.
    """
    w = np.asarray(weights, dtype=float)
    r = np.arange(rows.start, rows.stop)
    c = np.arange(cols.start, cols.stop)
    if w.shape != (len(r), len(c)):
        raise ValueError("weights do not match the window")
    out = CoefficientSet.zeros(grid)
    out.c00 = float(w.sum())
    for s in range(grid.d):
        ks = 1 << s
        ky, sy = _window_signs(r, grid.d, s)
        kx, sx = _window_signs(c, grid.d, s)
        ystart = np.r_[0, np.nonzero(np.diff(ky))[0] + 1]
        xstart = np.r_[0, np.nonzero(np.diff(kx))[0] + 1]
        wy = w * sy[:, None]
        plain_rows = np.add.reduceat(w, ystart, axis=0)
        signed_rows = np.add.reduceat(wy, ystart, axis=0)
        a10 = np.add.reduceat(plain_rows * sx[None, :], xstart, axis=1)
        a01 = np.add.reduceat(signed_rows, xstart, axis=1)
        a11 = np.add.reduceat(signed_rows * sx[None, :], xstart, axis=1)
        sel = np.ix_(ky[ystart], kx[xstart])
        out.c10[s][sel] = ks * a10
        out.c01[s][sel] = ks * a01
        out.c11[s][sel] = ks * a11
    return out


# --------------------------------------------------------------------------
# compositing and the sampling oracle


def composite(alpha: np.ndarray, color, background) -> np.ndarray:
    """``clamp(alpha) * color + (1 - clamp(alpha)) * background`` per channel."""
    a = np.clip(alpha, 0.0, 1.0)[..., None]
    color = np.asarray(color, dtype=float)
    bg = np.asarray(background, dtype=float)
    if bg.ndim <= 1:
        bg = np.broadcast_to(bg, alpha.shape + (len(color),))
    return a * color + (1.0 - a) * bg


def rasterize(shape, background, grid: RasterGrid) -> np.ndarray:
    """Wavelet-rasterize a :class:`~bezitrace.energy.VectorShape` over ``background``.

    Returns an ``(size, size, channels)`` array.
    """
    return composite(coverage(shape.bezigon, grid), shape.color, background)


def oracle_coverage(bezigon: Bezigon, grid: RasterGrid, samples_per_axis: int,
                    chord_tol: float | None = None) -> np.ndarray:
    """Fraction of an ``n x n`` stratified sample grid per pixel inside the curve.

    Even-odd rule against a finely flattened polyline; ``n = 1`` samples pixel
    centres only.
    """
    if samples_per_axis < 1:
        raise ValueError("samples_per_axis must be >= 1")
    size = grid.size
    ns = samples_per_axis
    total = size * ns
    if chord_tol is None:
        chord_tol = 1e-3 / total
    pts, _ = flatten(bezigon, chord_tol)
    x0, y0 = pts[:-1, 0], pts[:-1, 1]
    x1, y1 = pts[1:, 0], pts[1:, 1]
    out = np.zeros(grid.shape)
    sample_y = (np.arange(total) + 0.5) / total
    for row in range(size):
        ys = sample_y[row * ns:(row + 1) * ns]
        # half-open rule avoids double counting at vertices
        hit = ((y0[None, :] <= ys[:, None]) != (y1[None, :] <= ys[:, None]))
        r, e = np.nonzero(hit)
        if len(r) == 0:
            continue
        xs = x0[e] + (ys[r] - y0[e]) * (x1[e] - x0[e]) / (y1[e] - y0[e])
        order = np.lexsort((xs, r))
        r, xs = r[order], xs[order]
        # columns whose sample lies right of each crossing
        col = np.clip(np.ceil(xs * total - 0.5), 0, total).astype(np.int64)
        diff = np.zeros((ns, total + 1))
        # alternate +1/-1 along each row for the even-odd rule
        parity = np.zeros(len(r), dtype=np.int64)
        starts = np.r_[0, np.nonzero(np.diff(r))[0] + 1]
        counts = np.diff(np.r_[starts, len(r)])
        parity = np.arange(len(r)) - np.repeat(starts, counts)
        np.add.at(diff, (r, col), np.where(parity % 2 == 0, 1.0, -1.0))
        inside = np.cumsum(diff, axis=1)[:, :total]
        out[row] = inside.reshape(ns, size, ns).sum(axis=(0, 2)) / (ns * ns)
    return out


def oracle_rasterize(shape, background, grid: RasterGrid, samples_per_axis: int) -> np.ndarray:
    return composite(oracle_coverage(shape.bezigon, grid, samples_per_axis), shape.color, background)


# --------------------------------------------------------------------------
# derivatives


class CoverageGradient(NamedTuple):
    grad: np.ndarray          # flat 6N layout
    degenerate: np.ndarray    # bool mask over the same layout


def _padded(a):
    ks = a.shape[0]
    out = np.zeros((ks + 2, ks + 2))
    out[1:-1, 1:-1] = a
    return out


def _tent(u):
    return np.clip(np.minimum(u, 1.0 - u), 0.0, None)


def _segment_gradients(dec: _Decomposition, grid: RasterGrid, w: CoefficientSet):
    """Per-segment gradient ``(M, 4, 2)`` of ``dot(w, coefficients)`` and the
    ``(M, 2)`` mask of coordinates touched by a skipped tangential crossing."""
    m_seg = dec.n_seg
    gx = np.zeros((m_seg, 4))
    gy = np.zeros((m_seg, 4))
    degen = np.zeros((m_seg, 2), dtype=bool)
    d = grid.d
    n = grid.size
    px = dec.pcs[:, :, 0]
    py = dec.pcs[:, :, 1]

    if len(dec.seg):
        seg, ta, tb = dec.seg, dec.ta, dec.tb
        basis = [POWER_BASIS[:, i] for i in range(4)]

        def moments(make):
            return np.stack([_antiderivative_diff(np.array([make(j, b) for j in range(m_seg)]),
                                                  seg, ta, tb) for b in basis], axis=1)

        m1 = moments(lambda j, b: np.convolve(b, _pder(py[j])))   # \int b_i Y'
        m4 = moments(lambda j, b: np.convolve(b, _pder(px[j])))   # \int b_i X'
        m2 = moments(lambda j, b: np.convolve(px[j], _pder(b)))   # \int X b_i'
        m5 = moments(lambda j, b: np.convolve(py[j], _pder(b)))   # \int Y b_i'
        m3 = bernstein(tb) - bernstein(ta)                               # \int b_i'

        fx = w.c00 * m1
        fy = w.c00 * m2
        for s in range(d):
            ks = 1 << s
            shift = d - s
            kx = dec.ix >> shift
            ky = dec.iy >> shift
            qx = ((dec.ix >> (shift - 1)) & 1)[:, None]
            qy = ((dec.iy >> (shift - 1)) & 1)[:, None]
            sx = 1 - 2 * qx
            sy = 1 - 2 * qy
            w10 = w.c10[s][ky, kx][:, None]
            w01 = w.c01[s][ky, kx][:, None]
            w11 = w.c11[s][ky, kx][:, None]
            kxc = kx[:, None]
            kyc = ky[:, None]
            fx = fx + (w10 + w11 * sy) * ks * sx * m1 \
                - w01 * (qy * m3 + sy * (ks * m5 - kyc * m3))
            fy = fy + (w10 + w11 * sy) * (qx * m3 + sx * (ks * m2 - kxc * m3)) \
                - w01 * ks * sy * m4
        for i in range(4):
            gx[:, i] += np.bincount(seg, fx[:, i], m_seg)
            gy[:, i] += np.bincount(seg, fy[:, i], m_seg)

    # impulse terms at crossings of horizontal lines (derivatives in y)
    yc = dec.yc
    if len(yc.t):
        _mark(degen[:, 1], yc)
        ok = yc.ok
        sid, t, mm = yc.seg[ok], yc.t[ok], yc.line[ok]
        x0 = np.einsum("pk,pk->p", t[:, None] ** np.arange(4), px[sid])
        fac = np.where(mm == 0, x0 * w.c00, 0.0) - np.where(mm == n, x0 * w.c00, 0.0)
        for s in range(d):
            ks = 1 << s
            step = 1 << (d - s)
            kx = np.clip(np.floor(ks * x0), 0, ks - 1).astype(np.int64)
            tent = _tent(ks * x0 - kx)
            r = mm // step
            on_edge = (mm % step) == 0
            on_half = ~on_edge & ((mm % (step // 2)) == 0)
            p10 = _padded(w.c10[s])
            p11 = _padded(w.c11[s])
            rr = np.clip(r, 0, ks)
            edge = (p10[rr + 1, kx + 1] - p10[rr, kx + 1]) + (p11[rr + 1, kx + 1] + p11[rr, kx + 1])
            half = -2.0 * p11[np.clip(r, 0, ks - 1) + 1, kx + 1]
            fac = fac + tent * np.where(on_edge, edge, np.where(on_half, half, 0.0))
        contrib = (yc.sign[ok] * yc.weight[ok] * fac)[:, None] * bernstein(t)
        for i in range(4):
            gy[:, i] += np.bincount(sid, contrib[:, i], m_seg)

    # impulse terms at crossings of vertical lines (derivatives in x)
    xc = dec.xc
    if len(xc.t):
        _mark(degen[:, 0], xc)
        ok = xc.ok
        sid, t, mm = xc.seg[ok], xc.t[ok], xc.line[ok]
        y0 = np.einsum("pk,pk->p", t[:, None] ** np.arange(4), py[sid])
        fac = np.zeros(len(t))
        for s in range(d):
            ks = 1 << s
            step = 1 << (d - s)
            ky = np.clip(np.floor(ks * y0), 0, ks - 1).astype(np.int64)
            tent = _tent(ks * y0 - ky)
            on_edge = (mm % step) == 0
            r = np.clip(mm // step, 0, ks)
            p01 = _padded(w.c01[s])
            edge = p01[ky + 1, r + 1] - p01[ky + 1, r]
            fac = fac - tent * np.where(on_edge, edge, 0.0)
        contrib = (xc.sign[ok] * xc.weight[ok] * fac)[:, None] * bernstein(t)
        for i in range(4):
            gx[:, i] += np.bincount(sid, contrib[:, i], m_seg)

    return np.stack([gx, gy], axis=-1), degen


def _mark(flags, cr: _Crossings):
    bad = ~cr.ok
    if np.any(bad):
        flags[np.unique(cr.seg[bad])] = True


def _fold_degenerate(degen_seg: np.ndarray) -> np.ndarray:
    """Spread per-segment (x, y) degeneracy flags onto the 6N layout."""
    n = degen_seg.shape[0]
    out = np.zeros((n, 3, 2), dtype=bool)
    out[:] = degen_seg[:, None, :]
    out[:, 0] |= np.roll(degen_seg, 1, axis=0)
    return out.reshape(-1)


def coverage_gradient(bezigon: Bezigon, grid: RasterGrid, weights: np.ndarray) -> CoverageGradient:
    """Exact gradient of ``sum(weights * coverage)`` with respect to the 6N parameters."""
    w = analysis(weights, grid)
    dec = _decompose(bezigon.segments, grid)
    g, degen = _segment_gradients(dec, grid, w)
    return CoverageGradient(fold_segment_grad(g), _fold_degenerate(degen))
