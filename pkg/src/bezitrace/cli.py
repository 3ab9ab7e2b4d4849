"""Command-line interface: ``bezitrace {vectorize,rasterize,psnr,gradcheck,energyscan}``.

Exit codes: 0 success, 1 runtime failure (I/O, decoding, geometry outside
the canvas), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .diagnostics import energy_scan, gradcheck
from .energy import EnergyContext, EnergyWeights, PAPER_WEIGHTS
from .imaging import (ImageDecodeError, RasterImage, SvgParseError, VectorDocument, load_png, load_svg,
                      parse_color, psnr, save_png, save_svg)
from .init import InitParams
from .pipeline import render_document, render_shapes, vectorize
from .raster import DomainError, RasterGrid
from .solver import SolverOptions

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
MAX_DEPTH = 12

log = logging.getLogger("bezitrace")


class UsageError(ValueError):
    pass


@dataclass
class Config:
    """Everything ``vectorize`` needs besides the input image."""

    weights: EnergyWeights = PAPER_WEIGHTS
    solver: SolverOptions = SolverOptions()
    init: InitParams = InitParams()
    depth: int | None = None          # None: smallest d with 2**d >= max(W, H)
    background: np.ndarray | None = None
    normalize: bool = False
    seed_svg: str | None = None

    def __post_init__(self):
        if self.depth is not None and not 1 <= self.depth <= MAX_DEPTH:
            raise UsageError(f"depth must be in 1..{MAX_DEPTH}")
        if self.init.k <= 0 or self.init.err_tol <= 0:
            raise UsageError("segmentation k and err_tol must be positive")

    def resolve_depth(self, width: int, height: int) -> int:
        auto = max(0, math.ceil(math.log2(max(width, height))))
        if self.depth is None:
            return auto
        if self.depth < auto:
            raise UsageError(f"depth {self.depth} is too small for a {width}x{height} image")
        return self.depth


# --------------------------------------------------------------------------
# argument parsing helpers


def _weights(text: str) -> EnergyWeights:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("weights are four numbers: spt,apt,hpt,lpt") from None
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("weights are four numbers: spt,apt,hpt,lpt")
    try:
        return EnergyWeights(*vals)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _color(text: str) -> np.ndarray:
    try:
        return parse_color(text)
    except SvgParseError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _param(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--param is segment,point,coord (e.g. 0,0,y)")
    try:
        j, i = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError("segment and point must be integers") from None
    coord = {"x": 0, "y": 1, "0": 0, "1": 1}.get(parts[2].strip().lower())
    if coord is None or not 0 <= i <= 2 or j < 0:
        raise argparse.ArgumentTypeError("point is 0..2 and coord is x or y")
    return j, i, coord


def _range(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        a, b, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError("--range is start:stop:steps") from None
    if len(parts) != 3 or steps < 1:
        raise argparse.ArgumentTypeError("--range is start:stop:steps with steps >= 1")
    return np.linspace(a, b, steps + 1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bezitrace", description="Vectorize raster images into filled bezigons.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("vectorize", help="PNG to SVG")
    v.add_argument("input")
    v.add_argument("--out", required=True)
    v.add_argument("--init", help="SVG with initial bezigons (skips segmentation)")
    v.add_argument("--weights", type=_weights, default=PAPER_WEIGHTS, help="spt,apt,hpt,lpt")
    v.add_argument("--sweeps", type=_positive_int, default=SolverOptions.max_sweeps)
    v.add_argument("--iters", type=_positive_int, default=SolverOptions.max_iters,
                   help="quasi-Newton iterations per piece")
    v.add_argument("--global", dest="global_pass", action="store_true", default=True)
    v.add_argument("--no-global", dest="global_pass", action="store_false")
    v.add_argument("--report", help="write a JSON report here")
    v.add_argument("--normalize-data", action="store_true", help="divide the data term by l0")
    v.add_argument("--depth", type=_positive_int, help="grid depth d (default: from the image size)")
    v.add_argument("--bg", type=_color, help="background colour (default: estimated)")
    v.add_argument("--err-tol", type=float, default=InitParams.err_tol, help="curve fitting tolerance, px")
    v.add_argument("--threads", type=_positive_int, help="worker threads (default: BEZITRACE_THREADS or CPU count)")

    r = sub.add_parser("rasterize", help="SVG to PNG")
    r.add_argument("input")
    r.add_argument("--out", required=True)
    r.add_argument("--size", type=_positive_int, help="longer side of the output in pixels")
    r.add_argument("--bg", type=_color)
    r.add_argument("--oracle", type=_positive_int, metavar="N", help="point-sample N x N per pixel instead")

    q = sub.add_parser("psnr", help="PSNR of two PNGs in dB")
    q.add_argument("a")
    q.add_argument("b")

    g = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    g.add_argument("--trials", type=_positive_int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--depth", type=_positive_int, default=5)

    e = sub.add_parser("energyscan", help="data energy along one control coordinate, as CSV")
    e.add_argument("svg")
    e.add_argument("image")
    e.add_argument("--param", type=_param, required=True, help="segment,point,coord e.g. 0,0,y")
    e.add_argument("--range", dest="values", type=_range, required=True, help="start:stop:steps in px")
    e.add_argument("--shape", type=int, default=0, help="which shape of the SVG to vary")
    e.add_argument("--oracle", type=_positive_int, default=1, metavar="N", help="samples per axis of the oracle column")
    e.add_argument("--out", required=True)
    return p


# --------------------------------------------------------------------------
# commands


def _document_psnr(doc: VectorDocument, image: np.ndarray) -> float:
    """PSNR of a document exactly as it will be read back from disk."""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "doc.svg"
        save_svg(doc, path)
        back = load_svg(path)
    out = render_document(back)
    h, w = image.shape[:2]
    if image.shape[2] == 1:
        out = out.mean(axis=2, keepdims=True)
    return psnr(out[:h, :w], image)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def cmd_vectorize(args) -> int:
    solver = replace(SolverOptions(), max_sweeps=args.sweeps, max_iters=args.iters, global_pass=args.global_pass)
    cfg = Config(weights=args.weights, solver=solver, init=replace(InitParams(), err_tol=args.err_tol),
                 depth=args.depth, background=args.bg, normalize=args.normalize_data, seed_svg=args.init)
    image = load_png(args.input)
    depth = cfg.resolve_depth(image.width, image.height)
    seed = load_svg(cfg.seed_svg) if cfg.seed_svg else None
    res = vectorize(image.pixels, seed=seed, weights=cfg.weights, options=cfg.solver, init_params=cfg.init,
                    depth=depth, background=cfg.background, normalize=cfg.normalize, workers=args.threads)
    doc = res.document
    # colours are written with 8 bits, so the guarantee is checked on the file as written
    before = _document_psnr(res.initial, image.pixels)
    after = _document_psnr(doc, image.pixels)
    fallback = res.fallback
    if after < before:
        doc, after, fallback = res.initial, before, True
    save_svg(doc, args.out)
    print(f"{len(doc.shapes)} shapes, PSNR {before:.2f} dB -> {after:.2f} dB, {res.seconds:.1f} s")
    if args.report:
        rep = res.report()
        rep.update({"input": str(args.input), "output": str(args.out), "svg_psnr_before_db": before,
                    "svg_psnr_after_db": after, "fallback_to_initial": fallback,
                    "config": {"weights": list(cfg.weights.as_tuple()), "max_sweeps": solver.max_sweeps,
                               "max_iters": solver.max_iters, "global_pass": solver.global_pass,
                               "normalize_data": cfg.normalize, "err_tol": cfg.init.err_tol,
                               "seed_svg": cfg.seed_svg}})
        Path(args.report).write_text(json.dumps(rep, indent=2, default=_json_default) + "\n")
    return EXIT_OK


def cmd_rasterize(args) -> int:
    doc = load_svg(args.input)
    pixels = render_document(doc, size=args.size, background=args.bg, oracle=args.oracle)
    save_png(RasterImage(pixels), args.out)
    return EXIT_OK


def cmd_psnr(args) -> int:
    a = load_png(args.a)
    b = load_png(args.b)
    if a.channels != b.channels:
        a, b = a.rgb(), b.rgb()
    print(f"{psnr(a, b):.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rep = gradcheck(args.trials, args.seed, args.depth)
    print(f"trials={rep.trials} seed={rep.seed} depth={rep.depth} h={rep.h:g} h_prior={rep.h_prior:g}")
    print(rep.table())
    return EXIT_OK if rep.passed else EXIT_RUNTIME


def cmd_energyscan(args) -> int:
    doc = load_svg(args.svg)
    image = load_png(args.image)
    if not 0 <= args.shape < len(doc.shapes):
        raise UsageError(f"--shape {args.shape}: the SVG has {len(doc.shapes)} shapes")
    nch = image.channels
    grid = RasterGrid.for_image(image.width, image.height)
    n = grid.size
    padded = np.pad(image.pixels, ((0, n - image.height), (0, n - image.width), (0, 0)), mode="edge")
    mask = np.zeros(grid.shape, dtype=bool)
    mask[:image.height, :image.width] = True
    bg = doc.background if doc.background is not None else np.ones(3)
    shapes = doc.to_unit(n)
    if nch == 1:
        bg = np.array([np.mean(bg)])
        shapes = [s.replace(color=[float(np.mean(s.color))]) for s in shapes]
    below = render_shapes(shapes[:args.shape], bg, grid)
    ctx = EnergyContext(padded, grid, below, 1.0, mask)
    j, i, c = args.param
    if j >= shapes[args.shape].bezigon.n:
        raise UsageError(f"--param segment {j}: the shape has {shapes[args.shape].bezigon.n} segments")
    rows = energy_scan(shapes[args.shape], ctx, (j, i, c), args.values / n, args.oracle)
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["value_px", "e_data_wavelet", f"e_data_oracle_{args.oracle}"])
        for v, e, eo in rows:
            wr.writerow([f"{v * n:.10g}", f"{e:.12g}", f"{eo:.12g}"])
    return EXIT_OK


COMMANDS = {"vectorize": cmd_vectorize, "rasterize": cmd_rasterize, "psnr": cmd_psnr,
            "gradcheck": cmd_gradcheck, "energyscan": cmd_energyscan}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"bezitrace {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageDecodeError, SvgParseError, DomainError, OSError) as exc:
        print(f"bezitrace {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"bezitrace {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
