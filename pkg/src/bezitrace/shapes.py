"""Parametric test shapes in unit-square coordinates."""
from __future__ import annotations

import numpy as np

from .geometry import Bezigon

ARC_K = 0.5522847498


def _arc_ctrl(center, r, a0, a1):
    """Control triple of one cubic arc from angle ``a0`` to ``a1`` (radians)."""
    h = 4.0 / 3.0 * np.tan((a1 - a0) / 4.0) * r
    c = np.asarray(center, dtype=float)
    p0 = c + r * np.array([np.cos(a0), np.sin(a0)])
    p1 = c + r * np.array([np.cos(a1), np.sin(a1)])
    t0 = np.array([-np.sin(a0), np.cos(a0)])
    t1 = np.array([-np.sin(a1), np.cos(a1)])
    return np.array([p0, p0 + h * t0, p1 - h * t1])


def _line_ctrl(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.array([p, p + (q - p) / 3.0, p + 2.0 * (q - p) / 3.0])


def disc(center=(0.5, 0.5), r=0.3, arcs: int = 4, phase: float = 0.0) -> Bezigon:
    """Circle made of ``arcs`` equal cubic arcs, positively oriented."""
    a = phase + 2.0 * np.pi * np.arange(arcs + 1) / arcs
    return Bezigon(np.array([_arc_ctrl(center, r, a[i], a[i + 1]) for i in range(arcs)]))


def polygon(points) -> Bezigon:
    """Straight-edged bezigon through ``points`` with handles at the thirds."""
    p = np.asarray(points, dtype=float)
    return Bezigon(np.array([_line_ctrl(p[i], p[(i + 1) % len(p)]) for i in range(len(p))]))


def rounded_rect(center=(0.5, 0.5), size=(0.5, 0.5), radius=0.1) -> Bezigon:
    """Axis-aligned rectangle with quarter-circle corners: 4 edges, 4 arcs."""
    cx, cy = center
    hw, hh = size[0] / 2.0, size[1] / 2.0
    r = min(radius, hw, hh)
    ctrl = []
    corners = [(cx + hw - r, cy + hh - r), (cx - hw + r, cy + hh - r),
               (cx - hw + r, cy - hh + r), (cx + hw - r, cy - hh + r)]
    for i, c in enumerate(corners):
        a0 = i * np.pi / 2.0
        arc = _arc_ctrl(c, r, a0, a0 + np.pi / 2.0)
        ctrl.append(arc)
        nxt = corners[(i + 1) % 4]
        a1 = a0 + np.pi / 2.0
        p = np.asarray(c) + r * np.array([np.cos(a1), np.sin(a1)])
        q = np.asarray(nxt) + r * np.array([np.cos(a1), np.sin(a1)])
        ctrl.append(_line_ctrl(p, q))
    return Bezigon(np.array(ctrl))


def star(center=(0.5, 0.5), r_out=0.35, r_in=0.15, points: int = 5, phase: float = -np.pi / 2) -> Bezigon:
    """Star polygon with alternating outer and inner vertices."""
    k = np.arange(2 * points)
    rad = np.where(k % 2 == 0, r_out, r_in)
    ang = phase + np.pi * k / points
    pts = np.stack([center[0] + rad * np.cos(ang), center[1] + rad * np.sin(ang)], axis=1)
    return polygon(pts)


def jitter(bezigon: Bezigon, sigma: float, rng) -> Bezigon:
    """Add independent Gaussian noise to every control coordinate."""
    return Bezigon(bezigon.ctrl + rng.normal(0.0, sigma, bezigon.ctrl.shape))


def blob(center=(0.5, 0.5), r=0.25, lobes: int = 5, amp: float = 0.25, arcs: int = 8, phase: float = 0.0) -> Bezigon:
    """Smooth wavy closed curve: a radius modulated by a cosine, fitted by
    cubic Hermite arcs with exact tangents at the joints."""
    n = arcs
    th = phase + 2.0 * np.pi * np.arange(n + 1) / n
    rad = r * (1.0 + amp * np.cos(lobes * th))
    drad = -r * amp * lobes * np.sin(lobes * th)
    pts = np.stack([center[0] + rad * np.cos(th), center[1] + rad * np.sin(th)], axis=1)
    der = np.stack([drad * np.cos(th) - rad * np.sin(th), drad * np.sin(th) + rad * np.cos(th)], axis=1)
    h = (2.0 * np.pi / n) / 3.0
    ctrl = np.array([[pts[i], pts[i] + h * der[i], pts[i + 1] - h * der[i + 1]] for i in range(n)])
    return Bezigon(ctrl)


def desk_scene(rng, size: int):
    """Random clipart scene in pixel coordinates: ``(shapes, background)``.

    Two to four non-degenerate shapes of distinct solid colours, larger ones
    first so that smaller shapes sit on top.
    """
    from .energy import VectorShape

    bg = np.array([1.0, 1.0, 1.0]) if rng.random() < 0.7 else rng.uniform(0.6, 1.0, 3)
    count = int(rng.integers(2, 5))
    shapes = []
    for _ in range(count):
        kind = rng.choice(["disc", "rect", "star", "blob"])
        c = rng.uniform(0.25, 0.75, 2)
        s = rng.uniform(0.12, 0.3)
        if kind == "disc":
            bz = disc(c, s, arcs=int(rng.choice([4, 6])), phase=rng.uniform(0, np.pi))
        elif kind == "rect":
            bz = rounded_rect(c, (2 * s, 2 * s * rng.uniform(0.6, 1.0)), s * rng.uniform(0.2, 0.6))
        elif kind == "star":
            bz = star(c, s, s * rng.uniform(0.45, 0.65), int(rng.integers(5, 8)), rng.uniform(0, np.pi))
        else:
            bz = blob(c, s * 0.85, int(rng.integers(3, 6)), rng.uniform(0.1, 0.2), 12, rng.uniform(0, np.pi))
        ctrl = np.clip(bz.ctrl, 0.02, 0.98)
        color = rng.uniform(0.0, 1.0, 3)
        while np.linalg.norm(color - bg) < 0.5:
            color = rng.uniform(0.0, 1.0, 3)
        shapes.append(VectorShape(Bezigon(ctrl * size), color))
    shapes.sort(key=lambda s: -s.bezigon.signed_area())
    return shapes, bg
