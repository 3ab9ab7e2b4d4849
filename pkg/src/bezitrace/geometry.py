"""Cubic Bezier and bezigon primitives.

Points are ``(x, y)`` pairs stored as numpy arrays; a single cubic segment is a
``(4, 2)`` array of control points.  A :class:`Bezigon` stores its ``N`` segments
in a compact ``(N, 3, 2)`` array: row ``j`` holds the start anchor of segment
``j`` followed by its two interior control points.  The end point of segment
``j`` is the start anchor of segment ``j + 1`` (mod ``N``), so closure holds by
construction.

The global parameter ``t`` runs over ``[0, N]``; segment ``j`` (0-based)
covers ``[j, j + 1]``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Row k holds the t**k coefficients of the four cubic Bernstein polynomials.
POWER_BASIS = np.array(
    [[1.0, 0.0, 0.0, 0.0],
     [-3.0, 3.0, 0.0, 0.0],
     [3.0, -6.0, 3.0, 0.0],
     [-1.0, 3.0, -3.0, 1.0]]
)

DEFAULT_INTERSECTION_TOL = 1e-4
ADJACENT_PARAM_GAP = 1e-3

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
# fixed composite rule used wherever a length has to be differentiated
_FIXED_PANELS = 8


class Bezigon:
    """Closed chain of cubic Bezier segments with shared endpoints.

    Instances are immutable; use :meth:`with_params` to get a modified copy.
    """

    __slots__ = ("_ctrl",)

    def __init__(self, ctrl):
        a = np.array(ctrl, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 3, 2)
        if a.ndim != 3 or a.shape[1:] != (3, 2):
            raise ValueError(f"expected control array of shape (N, 3, 2), got {a.shape}")
        if a.shape[0] < 2:
            raise ValueError("a bezigon needs at least 2 segments")
        if not np.all(np.isfinite(a)):
            raise ValueError("control points must be finite")
        a.setflags(write=False)
        self._ctrl = a

    @classmethod
    def from_segments(cls, segments) -> "Bezigon":
        """Build from an ``(N, 4, 2)`` array; consecutive endpoints must match exactly."""
        seg = np.asarray(segments, dtype=float)
        if seg.ndim != 3 or seg.shape[1:] != (4, 2):
            raise ValueError(f"expected segments of shape (N, 4, 2), got {seg.shape}")
        nxt = np.roll(seg[:, 0], -1, axis=0)
        if not np.array_equal(seg[:, 3], nxt):
            raise ValueError("segments are not closed: end point of each segment must equal "
                             "the start point of the next")
        return cls(seg[:, :3])

    @classmethod
    def from_params(cls, params) -> "Bezigon":
        return cls(np.asarray(params, dtype=float).reshape(-1, 3, 2))

    @property
    def ctrl(self) -> np.ndarray:
        return self._ctrl

    @property
    def n(self) -> int:
        return self._ctrl.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def segments(self) -> np.ndarray:
        """All segments as an ``(N, 4, 2)`` array."""
        c = self._ctrl
        return np.concatenate([c, np.roll(c[:, :1], -1, axis=0)], axis=1)

    def segment(self, j: int) -> np.ndarray:
        return self.segments[j % self.n]

    def params(self) -> np.ndarray:
        """Flat 6N parameter vector; index ``6*j + 2*i + c`` is coordinate ``c`` of
        control point ``i`` (0 = anchor, 1, 2 = interior) of segment ``j``."""
        return self._ctrl.reshape(-1).copy()

    def with_params(self, params) -> "Bezigon":
        return Bezigon.from_params(params)

    def transformed(self, scale=1.0, offset=(0.0, 0.0)) -> "Bezigon":
        return Bezigon(self._ctrl * scale + np.asarray(offset, dtype=float))

    def reversed(self) -> "Bezigon":
        """Same curve traversed in the opposite direction."""
        seg = self.segments[::-1, ::-1]
        return Bezigon(seg[:, :3])

    def rotated(self, k: int) -> "Bezigon":
        """Same curve with the segment list rotated by ``k``."""
        return Bezigon(np.roll(self._ctrl, -k, axis=0))

    def signed_area(self) -> float:
        """Exact signed area (positive when the curve is positively oriented in x-y)."""
        return float(np.sum(_segment_area_integrals(self.segments)))

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """Tight axis-aligned bounds of the curve (not the control polygon)."""
        lo = np.full(2, np.inf)
        hi = np.full(2, -np.inf)
        for seg in self.segments:
            for c in range(2):
                ts = np.concatenate([[0.0, 1.0], derivative_roots(seg[:, c])])
                v = eval_segment(seg, ts)[:, c]
                lo[c] = min(lo[c], v.min())
                hi[c] = max(hi[c], v.max())
        return lo, hi

    def __eq__(self, other):
        return isinstance(other, Bezigon) and np.array_equal(self._ctrl, other._ctrl)

    def __hash__(self):
        return hash(self._ctrl.tobytes())

    def __repr__(self):
        return f"Bezigon(n={self.n})"


class IntersectionPair(NamedTuple):
    t1: float
    t2: float
    point: np.ndarray


def power_coeffs(seg: np.ndarray) -> np.ndarray:
    """Power-basis coefficients ``(4, 2)``: ``S(t) = sum_k t**k * coeffs[k]``."""
    return POWER_BASIS @ np.asarray(seg, dtype=float)


def bernstein(t) -> np.ndarray:
    """Cubic Bernstein basis values, shape ``t.shape + (4,)``."""
    t = np.asarray(t, dtype=float)[..., None]
    u = 1.0 - t
    k = np.arange(4)
    return np.array([1.0, 3.0, 3.0, 1.0]) * u ** (3 - k) * t ** k


def bernstein_deriv(t) -> np.ndarray:
    """d/dt of the Bernstein basis, shape ``t.shape + (4,)``."""
    t = np.asarray(t, dtype=float)
    u = 1.0 - t
    return np.stack([-3 * u * u, 3 * u * u - 6 * u * t, 6 * u * t - 3 * t * t, 3 * t * t], axis=-1)


def eval_segment(seg, t) -> np.ndarray:
    """Point(s) on one cubic segment at local parameter ``t`` in [0, 1]."""
    return bernstein(t) @ np.asarray(seg, dtype=float)


def deriv_segment(seg, t) -> np.ndarray:
    return bernstein_deriv(t) @ np.asarray(seg, dtype=float)


def de_casteljau(seg, t: float):
    """Split one segment at ``t``; returns ``(left, right, point)``."""
    p = np.asarray(seg, dtype=float)
    a = p[:-1] + t * (p[1:] - p[:-1])
    b = a[:-1] + t * (a[1:] - a[:-1])
    c = b[0] + t * (b[1] - b[0])
    left = np.array([p[0], a[0], b[0], c])
    right = np.array([c, b[1], a[2], p[3]])
    return left, right, c


def derivative_roots(coords) -> np.ndarray:
    """Parameters in (0, 1) where one coordinate of a cubic has zero derivative."""
    p = np.asarray(coords, dtype=float)
    a = 3 * (-p[0] + 3 * p[1] - 3 * p[2] + p[3])
    b = 6 * (p[0] - 2 * p[1] + p[2])
    c = 3 * (p[1] - p[0])
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0.0:
        return np.empty(0)
    a, b, c = a / scale, b / scale, c / scale
    if abs(a) < 1e-14:
        roots = [] if abs(b) < 1e-14 else [-c / b]
    else:
        disc = b * b - 4 * a * c
        if disc < 0:
            roots = []
        else:
            sq = np.sqrt(disc)
            q = -0.5 * (b + np.copysign(sq, b))
            roots = [q / a]
            if q != 0.0:
                roots.append(c / q)
    r = np.array(sorted(set(roots)), dtype=float)
    return r[(r > 0.0) & (r < 1.0)]


def _split_global(bz: Bezigon, t):
    t = np.asarray(t, dtype=float)
    n = bz.n
    if np.any(t < 0) or np.any(t > n):
        raise ValueError(f"global parameter must lie in [0, {n}]")
    j = np.minimum(np.floor(t).astype(int), n - 1)
    return j, t - j


def eval_bezigon(bz: Bezigon, t):
    """Point(s) on the bezigon at global parameter ``t`` in ``[0, N]``."""
    j, u = _split_global(bz, t)
    seg = bz.segments
    if np.ndim(t) == 0:
        return eval_segment(seg[j], u)
    return np.einsum("...k,...kc->...c", bernstein(u), seg[j])


def deriv_bezigon(bz: Bezigon, t):
    j, u = _split_global(bz, t)
    seg = bz.segments
    if np.ndim(t) == 0:
        return deriv_segment(seg[j], u)
    return np.einsum("...k,...kc->...c", bernstein_deriv(u), seg[j])


def _segment_area_integrals(seg: np.ndarray) -> np.ndarray:
    """Per-segment integral of X dY over t in [0, 1] (closed form)."""
    x, y = seg[..., 0], seg[..., 1]
    # \int B_i B_k' dt for cubic Bernstein polynomials
    m = np.array([[-10, 6, 3, 1],
                  [-6, 0, 3, 3],
                  [-3, -3, 0, 6],
                  [-1, -3, -6, 10]]) / 20.0
    return np.einsum("...i,ik,...k->...", x, m, y)


def _gl_speed_integral(seg: np.ndarray, a: float, b: float) -> float:
    h = 0.5 * (b - a)
    t = (a + b) * 0.5 + h * _GL_NODES
    v = deriv_segment(seg, t)
    return h * float(np.dot(_GL_WEIGHTS, np.hypot(v[:, 0], v[:, 1])))


def _adaptive_length(seg, a, b, tol, whole=None, depth=0):
    if whole is None:
        whole = _gl_speed_integral(seg, a, b)
    m = 0.5 * (a + b)
    left = _gl_speed_integral(seg, a, m)
    right = _gl_speed_integral(seg, m, b)
    if abs(left + right - whole) <= tol or depth >= 40:
        return left + right
    return (_adaptive_length(seg, a, m, tol / 2, left, depth + 1)
            + _adaptive_length(seg, m, b, tol / 2, right, depth + 1))


def _segment_ranges(n: int, t1: float, t2: float):
    """(j, a, b) local sub-ranges covering [t1, t2], clamped per segment."""
    if t1 > t2:
        raise ValueError("arc_length requires t1 <= t2")
    if t1 < 0 or t2 > n:
        raise ValueError(f"global parameters must lie in [0, {n}]")
    out = []
    for j in range(int(np.floor(t1)), min(int(np.ceil(t2)), n)):
        a = max(t1 - j, 0.0)
        b = min(t2 - j, 1.0)
        if b > a:
            out.append((j, a, b))
    return out


def arc_length(bz: Bezigon, t1: float = 0.0, t2: float | None = None, tol: float = 1e-8) -> float:
    """Length of the bezigon between global parameters ``t1 <= t2``.

    Adaptive Gauss-Legendre quadrature of the speed, to absolute tolerance ``tol``.
    """
    if t2 is None:
        t2 = float(bz.n)
    segs = bz.segments
    ranges = _segment_ranges(bz.n, t1, t2)
    per = tol / max(len(ranges), 1)
    return float(sum(_adaptive_length(segs[j], a, b, per) for j, a, b in ranges))


def _fixed_rule(a: float, b: float):
    """Nodes and weights of the composite rule on [a, b]."""
    edges = np.linspace(a, b, _FIXED_PANELS + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + h[:, None] * _GL_NODES).ravel()
    w = (h[:, None] * _GL_WEIGHTS).ravel()
    return t, w


def smooth_length(bz: Bezigon, t1: float = 0.0, t2: float | None = None, with_grad: bool = False):
    """Arc length by a fixed composite Gauss-Legendre rule.

    Unlike :func:`arc_length` the rule does not adapt to the curve, so the value
    is a smooth function of the control points and its exact gradient is
    available (``with_grad=True`` returns ``(length, grad)`` with ``grad`` in the
    flat 6N layout).
    """
    if t2 is None:
        t2 = float(bz.n)
    segs = bz.segments
    n = bz.n
    total = 0.0
    grad = np.zeros((n, 4, 2)) if with_grad else None
    for j, a, b in _segment_ranges(n, t1, t2):
        t, w = _fixed_rule(a, b)
        db = bernstein_deriv(t)
        v = db @ segs[j]
        speed = np.hypot(v[:, 0], v[:, 1])
        total += float(w @ speed)
        if with_grad:
            unit = v / np.maximum(speed, 1e-300)[:, None]
            grad[j] += np.einsum("q,qi,qc->ic", w, db, unit)
    if not with_grad:
        return total
    return total, fold_segment_grad(grad)


def fold_segment_grad(g: np.ndarray) -> np.ndarray:
    """Map a per-segment ``(N, 4, 2)`` gradient onto the shared 6N layout."""
    out = g[:, :3].copy()
    out[:, 0] += np.roll(g[:, 3], 1, axis=0)
    return out.reshape(-1)


def joint_tangents(bz: Bezigon, j: int):
    """Incoming and outgoing handle vectors at the start anchor of segment ``j``.

    ``a`` runs from the previous segment's last interior control point to the
    anchor, ``b`` from the anchor to this segment's first interior point.
    """
    c = bz.ctrl
    n = bz.n
    anchor = c[j % n, 0]
    a = anchor - c[(j - 1) % n, 2]
    b = c[j % n, 1] - anchor
    return a, b


MAX_FLATTEN_STEPS = 4096


def flatten(bz: Bezigon, chord_tol: float):
    """Closed polyline approximating the bezigon within ``chord_tol``.

    Each segment is sampled uniformly in ``t``.  A chord over a parameter step
    ``h`` deviates from the curve by at most ``h**2 / 8 * max|S''|``, and the
    second derivative of a cubic is bounded by six times its largest second
    difference, which fixes the number of samples.

    Returns ``(points, params)``; the last vertex repeats the first (``t = N``).
    """
    if chord_tol <= 0:
        raise ValueError("chord_tol must be positive")
    segs = bz.segments
    second = segs[:, :2] - 2.0 * segs[:, 1:3] + segs[:, 2:]
    bound = 6.0 * np.hypot(second[..., 0], second[..., 1]).max(axis=1)
    steps = np.clip(np.ceil(np.sqrt(bound / (8.0 * chord_tol))), 1, MAX_FLATTEN_STEPS).astype(int)
    seg_id = np.repeat(np.arange(bz.n), steps)
    t = np.arange(len(seg_id)) - np.repeat(np.cumsum(steps) - steps, steps)
    t = t / steps[seg_id]
    pts = np.einsum("mk,mkc->mc", bernstein(t), segs[seg_id])
    return np.concatenate([pts, segs[:1, 0]]), np.concatenate([seg_id + t, [float(bz.n)]])


def polyline_length(points: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(points, axis=0).T)))


def _edge_crossings(p: np.ndarray, blocks=None):
    """All proper crossings between non-adjacent edges of a closed polyline.

    ``blocks`` optionally gives ``(starts, lo, hi)``: the first edge of each
    run of edges and a box containing that run, so that only runs with
    overlapping boxes are compared.  Returns arrays ``(i, k, s, u)``: edge
    ``i`` at fraction ``s`` meets edge ``k`` at fraction ``u`` (``i < k``).
    """
    a = p[:-1]
    d = p[1:] - p[:-1]
    e = len(a)
    lo = np.minimum(p[:-1], p[1:])
    hi = np.maximum(p[:-1], p[1:])
    if blocks is None:
        blocks = (np.array([0]), lo.min(axis=0)[None], hi.max(axis=0)[None])
    starts, blo, bhi = blocks
    stops = np.r_[starts[1:], e]
    overlap = np.all(blo[:, None] <= bhi[None, :], axis=-1) & np.all(blo[None, :] <= bhi[:, None], axis=-1)
    bi, bk = np.nonzero(np.triu(overlap))
    lens = stops - starts
    count = lens[bi] * lens[bk]
    z = np.empty(0)
    if count.sum() == 0:
        return z.astype(int), z.astype(int), z, z
    pair = np.repeat(np.arange(len(bi)), count)
    q = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    width = lens[bk][pair]
    i = starts[bi][pair] + q // width
    k = starts[bk][pair] + q % width
    cand = (k > i + 1) & ~((i == 0) & (k == e - 1))
    i, k = i[cand], k[cand]
    box = np.all(lo[i] <= hi[k], axis=-1) & np.all(lo[k] <= hi[i], axis=-1)
    i, k = i[box], k[box]
    r = d[i]
    q = d[k]
    w = a[k] - a[i]
    den = r[:, 0] * q[:, 1] - r[:, 1] * q[:, 0]
    ok = den != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (w[:, 0] * q[:, 1] - w[:, 1] * q[:, 0]) / den
        u = (w[:, 0] * r[:, 1] - w[:, 1] * r[:, 0]) / den
    ok &= (s >= 0) & (s <= 1) & (u >= 0) & (u <= 1)
    return i[ok], k[ok], s[ok], u[ok]


def _newton_refine(bz: Bezigon, t1: float, t2: float, iters: int = 20):
    n = bz.n
    for _ in range(iters):
        f = eval_bezigon(bz, t1) - eval_bezigon(bz, t2)
        if np.hypot(*f) < 1e-15:
            break
        jac = np.column_stack([deriv_bezigon(bz, t1), -deriv_bezigon(bz, t2)])
        det = np.linalg.det(jac)
        if abs(det) < 1e-14:
            break
        step = np.linalg.solve(jac, f)
        n1 = min(max(t1 - step[0], 0.0), float(n))
        n2 = min(max(t2 - step[1], 0.0), float(n))
        if abs(n1 - t1) + abs(n2 - t2) < 1e-15:
            t1, t2 = n1, n2
            break
        t1, t2 = n1, n2
    return t1, t2


def _near_joint_pair(t1: float, t2: float, n: int) -> bool:
    return abs(t1 - t2) < ADJACENT_PARAM_GAP or abs(t1 - (t2 - n)) < ADJACENT_PARAM_GAP


def self_intersections(bz: Bezigon, tol: float = DEFAULT_INTERSECTION_TOL) -> list[IntersectionPair]:
    """Transverse self-crossings ``S(t1) = S(t2)`` with ``t1 < t2``.

    The curve is flattened within ``tol``, crossing polyline edges give the
    candidates, and each candidate is polished by 2D Newton iteration.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = bz.n
    pts, ts = flatten(bz, tol)
    segs = bz.segments
    starts = np.searchsorted(ts, np.arange(n))
    ii, kk, s, u = _edge_crossings(pts, (starts, segs.min(axis=1), segs.max(axis=1)))
    found: list[IntersectionPair] = []
    for i, k, si, ui in zip(ii, kk, s, u):
        t1 = ts[i] + si * (ts[i + 1] - ts[i])
        t2 = ts[k] + ui * (ts[k + 1] - ts[k])
        r1, r2 = _newton_refine(bz, t1, t2)
        p1 = eval_bezigon(bz, r1)
        if np.hypot(*(p1 - eval_bezigon(bz, r2))) <= tol and abs(r1 - t1) + abs(r2 - t2) < 0.5:
            t1, t2 = r1, r2
        if t1 > t2:
            t1, t2 = t2, t1
        if _near_joint_pair(t1, t2, n):
            continue
        point = eval_bezigon(bz, t1)
        if any(abs(t1 - f.t1) < tol and abs(t2 - f.t2) < tol for f in found):
            continue
        found.append(IntersectionPair(float(t1), float(t2), point))
    found.sort(key=lambda f: (f.t1, f.t2))
    return found
