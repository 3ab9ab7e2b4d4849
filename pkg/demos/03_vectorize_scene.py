"""Vectorize a synthetic clipart scene end to end through the CLI.

Draws a random desk scene, saves it as SVG (the ground truth) and as PNG,
vectorizes the PNG and compares the three files.

Run: python demos/03_vectorize_scene.py [outdir]   (under a minute)
"""
import json
import sys
from pathlib import Path

import numpy as np

from bezitrace.cli import main
from bezitrace.imaging import RasterImage, VectorDocument, load_png, load_svg, psnr, save_png, save_svg
from bezitrace.pipeline import render_document
from bezitrace.shapes import desk_scene

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

size = 128
shapes, bg = desk_scene(np.random.default_rng(3), size)
save_svg(VectorDocument(size, size, shapes, bg), out / "truth.svg")
save_png(RasterImage(render_document(load_svg(out / "truth.svg"))), out / "scene.png")

main(["vectorize", str(out / "scene.png"), "--out", str(out / "traced.svg"), "--report", str(out / "report.json")])
main(["rasterize", str(out / "traced.svg"), "--out", str(out / "traced.png")])

rep = json.loads((out / "report.json").read_text())
truth = load_svg(out / "truth.svg")
traced = load_svg(out / "traced.svg")
print(f"ground truth: {len(truth.shapes)} shapes, {sum(s.bezigon.n for s in truth.shapes)} segments")
print(f"traced:       {len(traced.shapes)} shapes, {sum(s.bezigon.n for s in traced.shapes)} segments")
print(f"PSNR of the initial tracing   {rep['svg_psnr_before_db']:.2f} dB")
print(f"PSNR after optimization       {rep['svg_psnr_after_db']:.2f} dB")
print(f"re-rendered traced.png vs input: {psnr(load_png(out / 'traced.png'), load_png(out / 'scene.png')):.2f} dB")
print(f"files in {out}/: truth.svg scene.png traced.svg traced.png report.json")
