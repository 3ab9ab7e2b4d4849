"""PNG and SVG input/output, PSNR, and padding onto the dyadic grid."""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import png

from .energy import VectorShape
from .geometry import Bezigon
from .raster import RasterGrid

PSNR_CAP = 99.0


class ImageDecodeError(ValueError):
    pass


class SvgParseError(ValueError):
    pass


@dataclass
class RasterImage:
    """Pixels as an ``(height, width, channels)`` float array in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=float)
        if p.ndim == 2:
            p = p[..., None]
        if p.ndim != 3 or p.shape[2] not in (1, 3):
            raise ValueError("pixels must be (height, width, 1 or 3)")
        self.pixels = np.clip(p, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def rgb(self) -> "RasterImage":
        if self.channels == 3:
            return self
        return RasterImage(np.repeat(self.pixels, 3, axis=2))


# --------------------------------------------------------------------------
# PNG


def load_png(path) -> RasterImage:
    """Decode an 8- or 16-bit PNG.  Alpha is composited over white."""
    try:
        w, h, rows, info = png.Reader(filename=str(path)).asDirect()
        data = np.vstack([np.asarray(r, dtype=np.float64) for r in rows])
    except (png.Error, OSError) as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc
    planes = info["planes"]
    maxval = float(2 ** info["bitdepth"] - 1)
    px = data.reshape(h, w, planes) / maxval
    if info.get("alpha"):
        a = px[..., -1:]
        px = px[..., :-1] * a + (1.0 - a)
    return RasterImage(px)


def save_png(image, path, bitdepth: int = 8) -> None:
    """Write an image as 8- or 16-bit PNG; values are rounded to the nearest code."""
    if not isinstance(image, RasterImage):
        image = RasterImage(image)
    if bitdepth not in (8, 16):
        raise ValueError("bitdepth must be 8 or 16")
    maxval = 2 ** bitdepth - 1
    codes = np.rint(image.pixels * maxval).astype(np.uint16 if bitdepth == 16 else np.uint8)
    greyscale = image.channels == 1
    writer = png.Writer(image.width, image.height, greyscale=greyscale, bitdepth=bitdepth)
    with open(path, "wb") as fh:
        writer.write(fh, codes.reshape(image.height, -1))


def psnr(a, b, cap: float = PSNR_CAP) -> float:
    """Peak signal-to-noise ratio in dB for images with peak value 1."""
    pa = a.pixels if isinstance(a, RasterImage) else np.asarray(a, dtype=float)
    pb = b.pixels if isinstance(b, RasterImage) else np.asarray(b, dtype=float)
    if pa.shape != pb.shape:
        raise ValueError(f"image shapes differ: {pa.shape} vs {pb.shape}")
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * np.log10(1.0 / mse))


# --------------------------------------------------------------------------
# padding


def pad_to_grid(pixels: np.ndarray):
    """Pad an image to the smallest dyadic square holding it.

    The border is replicated so that padding does not create edges.  Returns
    ``(padded, mask, grid)`` where ``mask`` marks the original pixels.
    """
    px = np.asarray(pixels, dtype=float)
    if px.ndim == 2:
        px = px[..., None]
    h, w = px.shape[:2]
    grid = RasterGrid.for_image(w, h)
    n = grid.size
    padded = np.pad(px, ((0, n - h), (0, n - w), (0, 0)), mode="edge")
    mask = np.zeros((n, n), dtype=bool)
    mask[:h, :w] = True
    return padded, mask, grid


# --------------------------------------------------------------------------
# SVG


@dataclass
class VectorDocument:
    """Shapes in canvas pixel coordinates, bottom to top."""

    width: float
    height: float
    shapes: list = field(default_factory=list)
    background: np.ndarray | None = None

    def to_unit(self, size: float) -> list:
        """Shapes rescaled to unit-square coordinates of a ``size``-pixel grid."""
        return [s.replace(bezigon=s.bezigon.transformed(1.0 / size)) for s in self.shapes]

    @classmethod
    def from_unit(cls, shapes, size: float, width: float, height: float, background=None):
        return cls(width, height, [s.replace(bezigon=s.bezigon.transformed(size)) for s in shapes],
                   background)


_NUMBER = re.compile(r"[-+]?(?:\d*\.\d+|\d+\.?)(?:[eE][-+]?\d+)?")
_TOKEN = re.compile(r"([A-Za-z])|" + _NUMBER.pattern)
_SUPPORTED = set("MmCcLlHhVvZz")

_NAMED = {"black": "#000000", "white": "#ffffff", "red": "#ff0000", "green": "#008000",
          "blue": "#0000ff", "yellow": "#ffff00", "gray": "#808080", "grey": "#808080"}


def parse_color(text: str) -> np.ndarray:
    t = text.strip().lower()
    t = _NAMED.get(t, t)
    if re.fullmatch(r"#[0-9a-f]{6}", t):
        return np.array([int(t[i:i + 2], 16) for i in (1, 3, 5)]) / 255.0
    if re.fullmatch(r"#[0-9a-f]{3}", t):
        return np.array([int(c * 2, 16) for c in t[1:]]) / 255.0
    m = re.fullmatch(r"rgb\(\s*([\d.]+)\s*,\s*([\d.]+)\s*,\s*([\d.]+)\s*\)", t)
    if m:
        return np.clip(np.array([float(v) for v in m.groups()]) / 255.0, 0.0, 1.0)
    raise SvgParseError(f"unsupported color {text!r}")


def format_color(color) -> str:
    c = np.clip(np.rint(np.asarray(color, dtype=float) * 255), 0, 255).astype(int)
    if c.size == 1:
        c = np.repeat(c, 3)
    return "#{:02x}{:02x}{:02x}".format(*c)


def _tokens(d: str):
    pos = 0
    out = []
    for m in _TOKEN.finditer(d):
        gap = d[pos:m.start()]
        if gap.strip(" \t\r\n,"):
            raise SvgParseError(f"unexpected text {gap.strip()!r} in path data")
        pos = m.end()
        if m.group(1):
            if m.group(1) not in _SUPPORTED:
                raise SvgParseError(f"unsupported path command {m.group(1)!r}")
            out.append(m.group(1))
        else:
            out.append(float(m.group(0)))
    if d[pos:].strip(" \t\r\n,"):
        raise SvgParseError(f"unexpected text {d[pos:].strip()!r} in path data")
    return out


def _line(p, q):
    return [p + (q - p) / 3.0, p + 2.0 * (q - p) / 3.0, q]


def parse_path(d: str) -> list[Bezigon]:
    """Closed bezigons from path data using M, C, L, H, V and Z."""
    toks = _tokens(d)
    subpaths = []
    cur = np.zeros(2)
    start = None
    segs = None
    cmd = None
    i = 0

    def take(k):
        nonlocal i
        vals = toks[i:i + k]
        if len(vals) < k or not all(isinstance(v, float) for v in vals):
            raise SvgParseError(f"command {cmd!r} expects {k} numbers")
        i += k
        return np.array(vals, dtype=float)

    def close():
        nonlocal segs, cur
        if segs is None:
            return
        if np.any(cur != start):
            segs.append(_line(cur, start))
        if segs:
            subpaths.append((start, segs))
        cur = start.copy()
        segs = None

    while i < len(toks):
        if isinstance(toks[i], str):
            cmd = toks[i]
            i += 1
            if cmd in "Zz":
                close()
                continue
        elif cmd is None:
            raise SvgParseError("path data must start with a command")
        rel = cmd.islower()
        base = cur if rel else np.zeros(2)
        c = cmd.upper()
        if c == "M":
            close()
            cur = base + take(2)
            start = cur.copy()
            segs = []
            cmd = "l" if rel else "L"     # further pairs are implicit line-tos
        elif segs is None:
            raise SvgParseError(f"command {cmd!r} before moveto")
        elif c == "C":
            v = take(6).reshape(3, 2) + base
            segs.append([v[0], v[1], v[2]])
            cur = v[2]
        elif c == "L":
            q = base + take(2)
            segs.append(_line(cur, q))
            cur = q
        elif c == "H":
            x = take(1)[0]
            q = np.array([cur[0] + x if rel else x, cur[1]])
            segs.append(_line(cur, q))
            cur = q
        elif c == "V":
            y = take(1)[0]
            q = np.array([cur[0], cur[1] + y if rel else y])
            segs.append(_line(cur, q))
            cur = q
    close()
    out = []
    for st, segs in subpaths:
        ctrl = np.empty((len(segs), 3, 2))
        prev = st
        for j, (c1, c2, end) in enumerate(segs):
            ctrl[j] = [prev, c1, c2]
            prev = end
        out.append(Bezigon(ctrl))
    return out


def _length(text):
    if text is None:
        return None
    m = _NUMBER.match(text.strip())
    if not m:
        raise SvgParseError(f"bad length {text!r}")
    return float(m.group(0))


def _fill_of(el) -> str | None:
    style = el.get("style", "")
    for part in style.split(";"):
        if ":" in part:
            k, v = part.split(":", 1)
            if k.strip() == "fill":
                return v.strip()
    return el.get("fill")


def load_svg(path, normalize_orientation: bool = True) -> VectorDocument:
    """Read the SVG subset: ``path`` elements with solid fills.

    Each closed subpath becomes one shape; negatively oriented bezigons are
    reversed unless ``normalize_orientation`` is False.
    """
    try:
        root = ET.parse(str(path)).getroot()
    except (ET.ParseError, OSError) as exc:
        raise SvgParseError(f"{path}: {exc}") from exc
    vb = root.get("viewBox")
    width = _length(root.get("width"))
    height = _length(root.get("height"))
    scale = np.ones(2)
    offset = np.zeros(2)
    if vb:
        x0, y0, vw, vh = (float(v) for v in _NUMBER.findall(vb))
        width = vw if width is None else width
        height = vh if height is None else height
        scale = np.array([width / vw, height / vh])
        offset = -np.array([x0, y0]) * scale
    if width is None or height is None:
        raise SvgParseError("svg needs width/height or a viewBox")
    doc = VectorDocument(width, height)
    for el in root.iter():
        tag = el.tag.rsplit("}", 1)[-1]
        if tag == "rect" and el.get("data-role") == "background":
            doc.background = parse_color(_fill_of(el) or "white")
            continue
        if tag != "path":
            continue
        if el.get("transform"):
            raise SvgParseError("path transforms are not supported")
        fill = _fill_of(el)
        if fill is not None and fill.strip().lower() == "none":
            continue
        color = parse_color(fill) if fill is not None else np.zeros(3)
        for bz in parse_path(el.get("d", "")):
            bz = Bezigon(bz.ctrl * scale + offset)
            if normalize_orientation and bz.signed_area() < 0:
                bz = bz.reversed()
            doc.shapes.append(VectorShape(bz, color))
    return doc


def path_data(bezigon: Bezigon) -> str:
    c = bezigon.ctrl
    n = bezigon.n
    parts = ["M{:.6f},{:.6f}".format(*c[0, 0])]
    for j in range(n):
        end = c[(j + 1) % n, 0]
        parts.append("C{:.6f},{:.6f} {:.6f},{:.6f} {:.6f},{:.6f}".format(*c[j, 1], *c[j, 2], *end))
    parts.append("Z")
    return " ".join(parts)


def save_svg(doc: VectorDocument, path) -> None:
    """Write one ``path`` per shape, coordinates with six decimals."""
    w, h = doc.width, doc.height
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:g}" height="{h:g}" viewBox="0 0 {w:g} {h:g}">']
    if doc.background is not None:
        lines.append(f'  <rect data-role="background" x="0" y="0" width="{w:g}" height="{h:g}" '
                     f'fill="{format_color(doc.background)}"/>')
    for s in doc.shapes:
        lines.append(f'  <path fill="{format_color(s.color)}" d="{path_data(s.bezigon)}"/>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")
