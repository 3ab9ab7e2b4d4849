"""Each shape prior fixes a defect the pixels alone cannot see.

Every case starts from a shape that renders almost exactly like the target
but is wrong in structure, optimizes it with and without one prior, and
prints the quantity that prior controls.

Run: python demos/02_priors.py   (about a minute)
"""
from dataclasses import replace

import numpy as np

from bezitrace.energy import PAPER_WEIGHTS, EnergyContext, VectorShape, e_spt
from bezitrace.geometry import Bezigon, arc_length, joint_tangents
from bezitrace.raster import RasterGrid, rasterize
from bezitrace.shapes import disc, polygon
from bezitrace.solver import optimize_bezigon

grid = RasterGrid(5)
U = grid.size
color = np.array([0.1, 0.2, 0.7])


def fit(truth, start, weights):
    img = rasterize(VectorShape(truth, color), np.ones(3), grid)
    out, _ = optimize_bezigon(VectorShape(start, color), EnergyContext.build(img, start, np.ones(3)), weights)
    return out.bezigon


def worst_angle(bz, joints):
    out = []
    for j in joints:
        a, b = joint_tangents(bz, j)
        out.append(np.degrees(np.arccos(np.clip(a @ b / np.linalg.norm(a) / np.linalg.norm(b), -1, 1))))
    return max(out)


def shortest_handle(bz):
    c = bz.ctrl
    return U * min(min(np.hypot(*(c[j, 1] - c[j, 0])), np.hypot(*(c[(j + 1) % bz.n, 0] - c[j, 2])))
                   for j in range(bz.n))


def rot(v, t):
    return np.array([np.cos(t) * v[0] - np.sin(t) * v[1], np.sin(t) * v[0] + np.cos(t) * v[1]])


def compare(label, truth, start, base, name, measure):
    on = measure(fit(truth, start, base))
    off = measure(fit(truth, start, replace(base, **{name: 0.0})))
    print(f"{label:<40} with {name.upper()}: {on:8.3f}   without: {off:8.3f}")


# A loop tucked inside the first arc of a disc.
truth = disc((0.5, 0.5), 0.25)
c = truth.ctrl.copy()
p, q = c[0, 0], c[1, 0]
out = (p + q) / 2 - 0.5
out /= np.linalg.norm(out)
c[0, 1], c[0, 2] = q + 0.08 * out, p + 0.08 * out
compare("self-intersection energy (loop)", truth, Bezigon(c), replace(PAPER_WEIGHTS, lpt=0.0), "spt", e_spt)

# False corners at the smooth joints of a 'D'.
cx, cy, r = 13 / U, 16 / U, 10 / U
segs = [[(cx, cy - r), (cx, cy - r / 3), (cx, cy + r / 3)]]
ang = np.linspace(np.pi / 2, -np.pi / 2, 5)
k = 4 / 3 * np.tan((ang[1] - ang[0]) / 4)
for a0, a1 in zip(ang[:-1], ang[1:]):
    p0 = np.array([cx + r * np.cos(a0), cy + r * np.sin(a0)])
    p1 = np.array([cx + r * np.cos(a1), cy + r * np.sin(a1)])
    segs.append([p0, p0 + k * r * np.array([-np.sin(a0), np.cos(a0)]), p1 - k * r * np.array([-np.sin(a1), np.cos(a1)])])
truth = Bezigon(np.array(segs)).reversed()
smooth = [j for j in range(truth.n) if worst_angle(truth, [j]) < 1.0]
c = truth.ctrl.copy()
for j in smooth:
    s = np.radians(8.0) * (-1) ** j
    c[j, 1] = c[j, 0] + rot(c[j, 1] - c[j, 0], s)
    c[j - 1, 2] = c[j, 0] + rot(c[j - 1, 2] - c[j, 0], -s)
compare("worst false-corner angle (deg)", truth, Bezigon(c), PAPER_WEIGHTS, "apt",
        lambda bz: worst_angle(bz, smooth))

# A square with its handles collapsed onto the corners.
sq = np.array([(8, 8), (24, 8), (24, 24), (8, 24)], float) / U
truth = polygon(sq)
c = truth.ctrl.copy()
for j in range(4):
    u = (sq[(j + 1) % 4] - sq[j]) / np.linalg.norm(sq[(j + 1) % 4] - sq[j])
    c[j, 1], c[j, 2] = sq[j] + 0.05 / U * u, sq[(j + 1) % 4] - 0.05 / U * u
compare("shortest handle (px)", truth, Bezigon(c), PAPER_WEIGHTS, "hpt", shortest_handle)

# The same square with two edges running back and forth over themselves.
c = truth.ctrl.copy()
for j in (0, 2):
    a, b = sq[j], sq[(j + 1) % 4]
    c[j, 1], c[j, 2] = a + 2 * (b - a), b - 2 * (b - a)
compare("outline length / true length", truth, Bezigon(c), replace(PAPER_WEIGHTS, spt=0.0), "lpt",
        lambda bz: arc_length(bz) / arc_length(truth))
