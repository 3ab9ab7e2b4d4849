"""Initial bezigons: region segmentation, boundary tracing and cubic fitting.

Coordinates in this module are pixels (x = column, y = row, y down).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import Bezigon, bernstein

# --------------------------------------------------------------------------
# segmentation


@dataclass
class LabelMap:
    labels: np.ndarray     # (H, W) int, contiguous 0..count-1
    count: int


class _DisjointSet:
    def __init__(self, n):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=np.int64)
        self.internal = np.zeros(n)

    def find(self, a):
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a, b, w):
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.internal[a] = max(self.internal[a], self.internal[b], w)
        return a


def _grid_edges(img):
    h, w = img.shape[:2]
    idx = np.arange(h * w).reshape(h, w)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    flat = img.reshape(h * w, -1)
    wgt = np.sqrt(np.sum((flat[a] - flat[b]) ** 2, axis=1))
    # stable sort on weight; ties keep lexicographic pixel order
    order = np.lexsort((b, a, wgt))
    return a[order], b[order], wgt[order]


def segment_regions(image, k: float = 300.0, min_size: int = 16, sigma: float = 0.0) -> LabelMap:
    """Graph-based region merging on the 4-connected pixel grid.

    ``image`` has values in [0, 1]; edge weights are RGB distances on the
    0-255 scale.  Components smaller than ``min_size`` are merged into the
    neighbour they share their lightest edge with.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[..., None]
    img = img * 255.0
    if sigma > 0:
        img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0))
    h, w = img.shape[:2]
    a, b, wgt = _grid_edges(img)
    ds = _DisjointSet(h * w)
    find = ds.find
    for u, v, x in zip(a.tolist(), b.tolist(), wgt.tolist()):
        ru, rv = find(u), find(v)
        if ru == rv:
            continue
        if x <= min(ds.internal[ru] + k / ds.size[ru], ds.internal[rv] + k / ds.size[rv]):
            ds.union(ru, rv, x)
    for u, v in zip(a.tolist(), b.tolist()):
        ru, rv = find(u), find(v)
        if ru != rv and (ds.size[ru] < min_size or ds.size[rv] < min_size):
            ds.union(ru, rv, 0.0)
    roots = np.array([find(i) for i in range(h * w)])
    _, labels = np.unique(roots, return_inverse=True)
    # relabel in order of first appearance (row-major)
    first = np.full(labels.max() + 1, h * w)
    np.minimum.at(first, labels, np.arange(h * w))
    rank = np.empty_like(first)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    labels = rank[labels].reshape(h, w)
    return LabelMap(labels, int(labels.max()) + 1)


# --------------------------------------------------------------------------
# boundary tracing


@dataclass
class PixelContour:
    """Closed loop of pixel-corner points; the first point is not repeated."""

    points: np.ndarray

    @property
    def perimeter(self) -> float:
        d = np.diff(np.vstack([self.points, self.points[:1]]), axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    def signed_area(self) -> float:
        p = self.points
        q = np.roll(p, -1, axis=0)
        return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def _boundary_edges(mask):
    """Directed unit edges with the region on their right (y down)."""
    h, w = mask.shape
    m = np.pad(mask, 1)
    inner = m[1:-1, 1:-1]
    rows, cols = np.nonzero(inner & ~m[:-2, 1:-1])      # top side, west -> east
    e = [np.stack([cols, rows, cols + 1, rows], 1)]
    rows, cols = np.nonzero(inner & ~m[1:-1, 2:])        # right side, north -> south
    e.append(np.stack([cols + 1, rows, cols + 1, rows + 1], 1))
    rows, cols = np.nonzero(inner & ~m[2:, 1:-1])        # bottom side, east -> west
    e.append(np.stack([cols + 1, rows + 1, cols, rows + 1], 1))
    rows, cols = np.nonzero(inner & ~m[1:-1, :-2])       # left side, south -> north
    e.append(np.stack([cols, rows + 1, cols, rows], 1))
    return np.concatenate(e)


def _loops(edges):
    out = {}
    for x0, y0, x1, y1 in edges.tolist():
        out.setdefault((x0, y0), []).append((x1, y1))
    used = set()
    loops = []
    for start_edge in edges.tolist():
        s = (start_edge[0], start_edge[1])
        t = (start_edge[2], start_edge[3])
        if (s, t) in used:
            continue
        loop = [s]
        used.add((s, t))
        prev, cur = s, t
        while cur != s:
            loop.append(cur)
            cands = [q for q in out[cur] if (cur, q) not in used]
            if len(cands) > 1:
                # pinch vertex: turn right so the region stays 4-connected
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                right = (cur[0] - dy, cur[1] + dx)
                cands = [right] if right in cands else cands
            nxt = cands[0]
            used.add((cur, nxt))
            prev, cur = cur, nxt
        loops.append(np.array(loop, dtype=float))
    return loops


def trace_boundary(labels, region: int):
    """Boundary loops of one region at pixel-edge resolution.

    Returns ``(outer, holes)``.  The outer contour is positively oriented;
    hole contours are returned positively oriented too, each enclosing one hole.
    """
    lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    mask = lab == region
    if not mask.any():
        raise ValueError(f"region {region} does not exist")
    loops = [PixelContour(p) for p in _loops(_boundary_edges(mask))]
    outer = [c for c in loops if c.signed_area() > 0]
    holes = [PixelContour(c.points[::-1].copy()) for c in loops if c.signed_area() < 0]
    outer.sort(key=lambda c: -c.signed_area())
    # a 4-connected region has one outer loop; extra positive loops come from
    # diagonal pinches and are kept as separate pieces
    return outer[0], holes + outer[1:]


# --------------------------------------------------------------------------
# curve fitting


def _unit(v):
    n = np.hypot(v[..., 0], v[..., 1])
    return v / np.maximum(n, 1e-12)[..., None]


def _corners(p, window, angle_deg):
    m = len(p)
    w = max(1, min(window, m // 4))
    prv = p[(np.arange(m) - w) % m] - p
    nxt = p[(np.arange(m) + w) % m] - p
    cosang = np.sum(_unit(prv) * _unit(nxt), axis=1)
    turning = np.pi - np.arccos(np.clip(cosang, -1.0, 1.0))
    cand = turning > np.deg2rad(angle_deg)
    keep = []
    for i in np.nonzero(cand)[0]:
        nb = turning[(np.arange(i - w, i + w + 1)) % m]
        if turning[i] >= nb.max() and not any(min(abs(i - j), m - abs(i - j)) <= w for j in keep):
            keep.append(int(i))
    return sorted(keep)


def _tangent(p, i, window, side):
    """Unit tangent at point ``i`` looking forward (+1), backward (-1) or centred (0)."""
    m = len(p)
    w = max(1, min(window, m // 4))
    if side > 0:
        return _unit(p[(i + w) % m] - p[i])
    if side < 0:
        return _unit(p[(i - w) % m] - p[i])
    return _unit(p[(i + w) % m] - p[(i - w) % m])


def _chord_params(d):
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(d, axis=0).T))])
    return s / s[-1] if s[-1] > 0 else np.linspace(0, 1, len(d))


def _fit_cubic(d, u, t1, t2):
    """Least-squares cubic with end points d[0], d[-1] and given end tangents."""
    b = bernstein(u)
    a1 = b[:, 1:2] * t1
    a2 = b[:, 2:3] * t2
    c = np.array([[np.sum(a1 * a1), np.sum(a1 * a2)], [0.0, np.sum(a2 * a2)]])
    c[1, 0] = c[0, 1]
    tmp = d - np.outer(b[:, 0] + b[:, 1], d[0]) - np.outer(b[:, 2] + b[:, 3], d[-1])
    x = np.array([np.sum(a1 * tmp), np.sum(a2 * tmp)])
    det = c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0]
    seg_len = np.hypot(*(d[-1] - d[0]))
    al = ar = 0.0
    if abs(det) > 1e-12:
        al = (x[0] * c[1, 1] - x[1] * c[0, 1]) / det
        ar = (c[0, 0] * x[1] - c[1, 0] * x[0]) / det
    eps = 1e-6 * seg_len
    if al < eps or ar < eps:
        al = ar = seg_len / 3.0
    return np.array([d[0], d[0] + al * t1, d[-1] + ar * t2, d[-1]])


def _reparam(seg, d, u):
    d1 = 3 * np.diff(seg, axis=0)
    d2 = 2 * np.diff(d1, axis=0)
    q = bernstein(u) @ seg
    u1 = (1 - u)[:, None] ** 2 * d1[0] + 2 * ((1 - u) * u)[:, None] * d1[1] + (u * u)[:, None] * d1[2]
    u2 = (1 - u)[:, None] * d2[0] + u[:, None] * d2[1]
    num = np.sum((q - d) * u1, axis=1)
    den = np.sum(u1 * u1, axis=1) + np.sum((q - d) * u2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        un = np.where(np.abs(den) > 1e-12, u - num / den, u)
    return np.clip(un, 0.0, 1.0)


def _point_curve_dist(seg, d, samples=64):
    """Distance of each point to the cubic, from a dense polyline."""
    q = bernstein(np.linspace(0, 1, samples + 1)) @ seg
    a = q[:-1]
    v = q[1:] - a
    vv = np.maximum(np.sum(v * v, axis=1), 1e-300)
    s = np.clip(np.einsum("pkc,kc->pk", d[:, None, :] - a[None], v) / vv, 0, 1)
    proj = a[None] + s[..., None] * v[None]
    return np.min(np.hypot(*(d[:, None, :] - proj).transpose(2, 0, 1)), axis=1)


def _fit_span(d, t1, t2, tol, depth=0):
    """Recursive Schneider fit of an open point run; returns a list of (4, 2) cubics."""
    if len(d) == 3:
        # quadratic through all three points, degree-elevated; zero residual
        c = 2.0 * d[1] - 0.5 * (d[0] + d[2])
        return [np.array([d[0], d[0] + 2 * (c - d[0]) / 3, d[2] + 2 * (c - d[2]) / 3, d[2]])]
    if len(d) < 3 or depth > 12:
        # straight pieces through every point; exact, used only as a last resort
        return [np.array([a, a + (b - a) / 3, a + 2 * (b - a) / 3, b]) for a, b in zip(d[:-1], d[1:])]
    u = _chord_params(d)
    seg = _fit_cubic(d, u, t1, t2)
    for _ in range(4):
        dist = _point_curve_dist(seg, d)
        if dist.max() <= tol:
            return [seg]
        u = _reparam(seg, d, u)
        seg = _fit_cubic(d, u, t1, t2)
    dist = _point_curve_dist(seg, d)
    if dist.max() <= tol:
        return [seg]
    k = int(np.argmax(dist[1:-1])) + 1
    tc = _unit(d[min(k + 1, len(d) - 1)] - d[max(k - 1, 0)])
    return _fit_span(d[:k + 1], t1, -tc, tol, depth + 1) + _fit_span(d[k:], tc, t2, tol, depth + 1)


def _two_segment(p):
    i = int(np.argmax(np.hypot(*(p - p[0]).T)))
    a, b = p[0], p[i]
    if np.allclose(a, b):
        b = a + np.array([1e-3, 0.0])
    return Bezigon(np.array([[a, a + (b - a) / 3, a + 2 * (b - a) / 3],
                             [b, b + (a - b) / 3, b + 2 * (a - b) / 3]]))


def fit_bezigon(contour, err_tol: float = 1.0, corner_angle: float = 60.0, window: int = 4) -> Bezigon:
    """Closed piecewise-cubic fit of a contour with corner-seeded splitting.

    Every contour point ends within ``err_tol`` of the result (checked against
    a dense polyline of each cubic).
    """
    p = np.asarray(contour.points if isinstance(contour, PixelContour) else contour, dtype=float)
    if len(p) > 1 and np.allclose(p[0], p[-1]):
        p = p[:-1]
    if len(p) < 4:
        raise ValueError("contour needs at least 4 points")
    area = 0.5 * abs(np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1]))
    if area < 1e-9:
        return _two_segment(p)
    m = len(p)
    corners = _corners(p, window, corner_angle)
    breaks = list(corners)
    smooth = set()
    if len(breaks) == 0:
        breaks = [0]
        smooth.add(0)
    if len(breaks) == 1:
        far = int(np.argmax(np.hypot(*(p - p[breaks[0]]).T)))
        if far == breaks[0]:
            far = (breaks[0] + m // 2) % m
        breaks = sorted(breaks + [far])
        smooth.add(far)
    segs = []
    for bi, i in enumerate(breaks):
        j = breaks[(bi + 1) % len(breaks)]
        idx = np.arange(i, i + ((j - i) % m or m) + 1) % m
        d = p[idx]
        t1 = _tangent(p, i, window, 0) if i in smooth else _tangent(p, i, window, +1)
        t2 = -_tangent(p, j, window, 0) if j in smooth else _tangent(p, j, window, -1)
        segs += _fit_span(d, t1, t2, err_tol)
    ctrl = np.array([s[:3] for s in segs])
    bz = Bezigon(ctrl)
    if bz.n < 2:
        return _two_segment(p)
    return bz


# --------------------------------------------------------------------------
# pipeline


@dataclass
class InitParams:
    k: float = 300.0
    min_size: int = 16
    sigma: float = 0.0
    err_tol: float = 1.5
    corner_angle: float = 60.0
    min_thickness: float = 1.5
    exclude_background: bool = True


@dataclass
class InitShape:
    bezigon: Bezigon       # pixel coordinates
    color: np.ndarray
    region: int
    hole: bool = False


def merge_thin_regions(lm: LabelMap, min_thickness: float) -> LabelMap:
    """Absorb regions thinner than ``min_thickness`` pixels into a neighbour.

    Thickness is ``2 * area / perimeter``, the width of a strip.  Such regions
    are mostly anti-aliased edge bands between two real regions; each one
    joins the neighbour it shares the longest border with.
    """
    labels = lm.labels.copy()
    for _ in range(lm.count):
        a, b = labels[:, :-1].ravel(), labels[:, 1:].ravel()
        c, d = labels[:-1, :].ravel(), labels[1:, :].ravel()
        u = np.concatenate([a, c])
        v = np.concatenate([b, d])
        diff = u != v
        u, v = u[diff], v[diff]
        n = lm.count
        area = np.bincount(labels.ravel(), minlength=n)
        border = np.bincount(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]), minlength=n)
        perim = np.bincount(u, minlength=n) + np.bincount(v, minlength=n) + border
        live = area > 0
        thick = np.where(live, 2.0 * area / np.maximum(perim, 1), np.inf)
        thin = np.nonzero(thick < min_thickness)[0]
        if len(thin) == 0 or live.sum() <= 1:
            break
        r = thin[np.argmin(area[thin])]
        nb = np.concatenate([v[u == r], u[v == r]])
        if len(nb) == 0:
            break
        labels[labels == r] = np.bincount(nb).argmax()
    _, inv = np.unique(labels.ravel(), return_inverse=True)
    inv = inv.reshape(labels.shape)
    # keep labels in order of first appearance
    first = np.unique(inv.ravel(), return_index=True)[1]
    order = np.argsort(np.argsort(first))
    return LabelMap(order[inv], int(inv.max()) + 1)


def initialize(image, params: InitParams = InitParams()) -> list[InitShape]:
    """Segment, trace and fit every region; shapes are sorted largest first.

    The largest region is treated as background and skipped when
    ``exclude_background`` is set.  Holes become their own shapes filled with
    the colour of the background pixels they enclose (all enclosed pixels if
    none of them is background).
    """
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[..., None]
    lm = segment_regions(img, params.k, params.min_size, params.sigma)
    if params.min_thickness > 0:
        lm = merge_thin_regions(lm, params.min_thickness)
    if lm.count <= 1:
        return []
    sizes = np.bincount(lm.labels.ravel(), minlength=lm.count)
    bg = int(np.argmax(sizes)) if params.exclude_background else -1
    shapes = []
    for r in range(lm.count):
        if r == bg:
            continue
        mask = lm.labels == r
        outer, holes = trace_boundary(lm, r)
        shapes.append(InitShape(fit_bezigon(outer, params.err_tol, params.corner_angle),
                                img[mask].mean(axis=0), r))
        if not holes:
            continue
        enclosed = ndimage.binary_fill_holes(mask) & ~mask
        comp, _ = ndimage.label(enclosed, structure=np.ones((3, 3)))
        for hc in holes:
            if len(hc.points) < 4:
                continue
            pix = _hole_pixel(hc.points, mask.shape)
            sel = comp == comp[pix] if pix is not None and comp[pix] > 0 else enclosed
            bgsel = sel & (lm.labels == bg)
            color = img[bgsel if bgsel.any() else sel].mean(axis=0)
            shapes.append(InitShape(fit_bezigon(hc, params.err_tol, params.corner_angle), color, r, True))
    shapes.sort(key=lambda s: -s.bezigon.signed_area())
    return shapes


def _hole_pixel(points, shape):
    """A pixel just outside a positively oriented hole loop, i.e. inside the hole."""
    # hole loops were reversed to positive orientation, so the hole lies on the right
    a, b = points[0], points[1]
    dx, dy = b - a
    mid = 0.5 * (a + b) + 0.5 * np.array([-dy, dx])
    r, c = int(np.floor(mid[1])), int(np.floor(mid[0]))
    if 0 <= r < shape[0] and 0 <= c < shape[1]:
        return (r, c)
    return None
