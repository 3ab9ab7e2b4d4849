"""Image-to-SVG driver: initialize, optimize each shape, evaluate."""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyContext, EnergyWeights, PAPER_WEIGHTS, VectorShape, estimate_background
from .geometry import Bezigon, smooth_length
from .imaging import VectorDocument, pad_to_grid, psnr
from .init import InitParams, initialize
from .raster import RasterGrid, composite, coverage, oracle_coverage
from .solver import OptimizeReport, SolverOptions, optimize_bezigon

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
COVER_EPS = 1e-3


def render_shapes(shapes, background, grid: RasterGrid, oracle: int | None = None,
                  alphas=None) -> np.ndarray:
    """Composite unit-square shapes back to front over a background colour."""
    bg = np.asarray(background, dtype=float).reshape(-1)
    out = np.broadcast_to(bg, grid.shape + (len(bg),)).copy()
    for i, s in enumerate(shapes):
        if alphas is not None:
            a = alphas[i]
        elif oracle:
            a = oracle_coverage(s.bezigon, grid, oracle)
        else:
            a = coverage(s.bezigon, grid)
        out = composite(a, s.color, out)
    return out


def render_document(doc: VectorDocument, size: int | None = None, background=None,
                    oracle: int | None = None) -> np.ndarray:
    """Rasterize a document to ``(height, width, 3)`` pixels.

    ``size`` rescales the canvas so that its longer side has that many
    pixels; the raster is computed on the enclosing dyadic grid and cropped.
    """
    scale = 1.0 if size is None else size / max(doc.width, doc.height)
    w = max(1, int(round(doc.width * scale)))
    h = max(1, int(round(doc.height * scale)))
    grid = RasterGrid.for_image(w, h)
    if background is None:
        background = doc.background if doc.background is not None else np.ones(3)
    bg = _channels(background, 3)
    shapes = [s.replace(bezigon=s.bezigon.transformed(scale / grid.size), color=_channels(s.color, 3))
              for s in doc.shapes]
    return render_shapes(shapes, bg, grid, oracle=oracle)[:h, :w]


def worker_count() -> int:
    env = os.environ.get("BEZITRACE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError("BEZITRACE_THREADS must be an integer") from None
    return os.cpu_count() or 1


@dataclass
class ShapeResult:
    index: int
    initial: VectorShape
    final: VectorShape
    report: OptimizeReport | None
    seconds: float


@dataclass
class VectorizeResult:
    document: VectorDocument
    initial: VectorDocument
    psnr_before: float
    psnr_after: float
    shapes: list
    grid: RasterGrid
    seconds: float
    fallback: bool = False
    background: np.ndarray = field(default_factory=lambda: np.ones(3))

    def report(self) -> dict:
        u = self.grid.size
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "width": self.document.width,
            "height": self.document.height,
            "grid_depth": self.grid.d,
            "psnr_resolution": [self.document.width, self.document.height],
            "psnr_before_db": self.psnr_before,
            "psnr_after_db": self.psnr_after,
            "fallback_to_initial": self.fallback,
            "background": [float(v) for v in self.background],
            "seconds": self.seconds,
            "shapes": [],
        }
        for r in self.shapes:
            entry = {
                "index": r.index,
                "segments": r.final.bezigon.n,
                "color": [float(v) for v in r.final.color],
                "initial_control_points_px": (r.initial.bezigon.ctrl * u).tolist(),
                "control_points_px": (r.final.bezigon.ctrl * u).tolist(),
                "seconds": r.seconds,
            }
            if r.report is not None:
                entry.update(r.report.as_dict())
            out["shapes"].append(entry)
        return out


def _initial_color(ctx: EnergyContext, bezigon: Bezigon, fallback) -> np.ndarray:
    a = coverage(bezigon, ctx.grid)
    sel = (a > 0.9) & (ctx.weight > 0.25)
    if not sel.any():
        return np.clip(np.asarray(fallback, dtype=float), 0, 1)
    return np.clip(ctx.image[sel].mean(axis=0), 0.0, 1.0)


def _channels(color, nch: int) -> np.ndarray:
    """Colour with ``nch`` channels: RGB is averaged to grey, grey repeated to RGB."""
    c = np.clip(np.asarray(color, dtype=float).reshape(-1), 0.0, 1.0)
    if len(c) == nch:
        return c
    if nch == 1:
        return np.array([c.mean()])
    return np.resize(c, nch)


def _fit_inside(bz: Bezigon) -> Bezigon:
    """Clamp control points into the unit square so the curve stays inside."""
    return Bezigon(np.clip(bz.ctrl, 0.0, 1.0))


def vectorize(image, *, seed: VectorDocument | None = None, weights: EnergyWeights = PAPER_WEIGHTS,
              options: SolverOptions = SolverOptions(), init_params: InitParams = InitParams(),
              depth: int | None = None, background=None, normalize: bool = False,
              optimize: bool = True, workers: int | None = None) -> VectorizeResult:
    """Vectorize an ``(H, W, C)`` image in [0, 1].

    Every shape is optimized against the input with the shapes below it
    (in their initial geometry) composited over the background and the
    shapes above it composited on top, so pixels hidden under other shapes
    carry proportionally less weight.
    """
    t_start = time.perf_counter()
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[..., None]
    h, w, nch = img.shape
    padded, lattice, grid = pad_to_grid(img)
    if depth is not None and depth != grid.d:
        if 2 ** depth < max(h, w):
            raise ValueError(f"depth {depth} is too small for a {w}x{h} image")
        grid = RasterGrid(depth)
        n = grid.size
        padded = np.pad(img, ((0, n - h), (0, n - w), (0, 0)), mode="edge")
        lattice = np.zeros(grid.shape, dtype=bool)
        lattice[:h, :w] = True
    u = float(grid.size)

    if seed is not None:
        source = seed.shapes
    else:
        source = initialize(img, init_params)
    init_shapes = [VectorShape(_fit_inside(s.bezigon.transformed(1.0 / u)), _channels(s.color, nch))
                   for s in source]

    alphas = [coverage(s.bezigon, grid) for s in init_shapes]
    if background is None and seed is not None and seed.background is not None:
        background = seed.background
    if background is None:
        union = np.clip(np.sum(alphas, axis=0), 0, 1) if alphas else np.zeros(grid.shape)
        bg = estimate_background(padded, union, lattice)
    else:
        bg = _channels(background, nch)

    def build_context(k: int) -> EnergyContext:
        below = render_shapes(init_shapes[:k], bg, grid, alphas=alphas[:k])
        # shapes above k, composited over transparent: coverage and premultiplied colour
        cover = np.zeros(grid.shape)
        paint = np.zeros(padded.shape)
        for s, a in zip(init_shapes[k + 1:], alphas[k + 1:]):
            a = np.clip(a, 0.0, 1.0)
            paint = a[..., None] * s.color + (1.0 - a[..., None]) * paint
            cover = a + (1.0 - a) * cover
        # rendered - image = (1 - cover) * (shape over below - target)
        visible = 1.0 - cover
        seen = visible > COVER_EPS
        target = padded.copy()
        target[seen] = (padded[seen] - paint[seen]) / visible[seen][:, None]
        weight = np.where(seen, visible * visible, 0.0)
        if not np.any(lattice & seen):
            target, weight = padded, None
        return EnergyContext(target, grid, below, max(smooth_length(init_shapes[k].bezigon) * u, 1e-12),
                             lattice, normalize, weight)

    def run(k: int) -> ShapeResult:
        t0 = time.perf_counter()
        ctx = build_context(k)
        shape = init_shapes[k]
        if seed is None:
            shape = shape.replace(color=_initial_color(ctx, shape.bezigon, shape.color))
        if not optimize:
            return ShapeResult(k, shape, shape, None, time.perf_counter() - t0)
        final, rep = optimize_bezigon(shape, ctx, weights, options)
        if rep is not None:
            log.info("shape %d: %d sweeps, E %.4g -> %.4g", k, rep.sweeps, rep.trace[0].total, rep.trace[-1].total)
        return ShapeResult(k, shape, final, rep, time.perf_counter() - t0)

    nw = workers if workers is not None else worker_count()
    if nw > 1 and len(init_shapes) > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(run, range(len(init_shapes))))
    else:
        results = [run(k) for k in range(len(init_shapes))]

    start_shapes = [r.initial for r in results]
    final_shapes = [r.final for r in results]
    crop = (slice(0, h), slice(0, w))
    before = psnr(render_shapes(start_shapes, bg, grid)[crop], img)
    after = psnr(render_shapes(final_shapes, bg, grid)[crop], img)
    fallback = after < before
    if fallback:
        log.warning("optimized result scores below the initialization; keeping the initial shapes")
        final_shapes = start_shapes
        after = before
    doc = VectorDocument.from_unit(final_shapes, u, w, h, bg)
    init_doc = VectorDocument.from_unit(start_shapes, u, w, h, bg)
    return VectorizeResult(doc, init_doc, before, after, results, grid,
                           time.perf_counter() - t_start, fallback, bg)
