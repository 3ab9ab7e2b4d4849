"""Gradient checks against central differences, and data-energy scans."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyContext, VectorShape, apt_terms, data_energy, data_gradient, hpt_terms, lpt_terms
from .geometry import Bezigon, fold_segment_grad, self_intersections, smooth_length
from .raster import RasterGrid, composite, oracle_coverage

DATA_REL_TOL = 1e-3
DATA_PASS_FRACTION = 0.99
DATA_MAX_FLAGGED = 0.01
PRIOR_REL_TOL = 1e-4
PRIOR_MAX_FLAGGED = 0.01
# joints whose turning angle is within this many stencil widths of 0 or pi
KINK_MARGIN = 10.0


def relative_error(analytic, numeric) -> np.ndarray:
    """``|a - f| / max(|f|, 1e-4 * max|f|)`` per coordinate.

    The floor keeps coordinates whose true derivative is tiny compared with
    the rest of the gradient from dominating the table.
    """
    a = np.asarray(analytic, dtype=float)
    f = np.asarray(numeric, dtype=float)
    floor = max(1e-4 * float(np.max(np.abs(f))) if f.size else 0.0, 1e-12)
    return np.abs(a - f) / np.maximum(np.abs(f), floor)


def central_difference(fun, x, h: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def random_bezigon(rng, n: int | None = None, center=(0.5, 0.5), radius=(0.18, 0.38)) -> Bezigon:
    """Random star-shaped closed curve inside the unit square.

    Joints sit at increasing angles around ``center``; handles follow a
    perturbed tangent, so the curve is generically free of tangencies and
    self-crossings.
    """
    if n is None:
        n = int(rng.integers(3, 7))
    ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
    gaps = np.diff(np.r_[ang, ang[0] + 2.0 * np.pi])
    while gaps.max() > 0.8 * np.pi:
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
        gaps = np.diff(np.r_[ang, ang[0] + 2.0 * np.pi])
    r = rng.uniform(*radius, n)
    c = np.asarray(center, dtype=float)
    pts = c + r[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    ctrl = np.empty((n, 3, 2))
    for j in range(n):
        k = (j + 1) % n
        chord = pts[k] - pts[j]
        span = gaps[j]
        tj = np.array([-np.sin(ang[j]), np.cos(ang[j])])
        tk = np.array([-np.sin(ang[k]), np.cos(ang[k])])
        lj = np.linalg.norm(chord) * rng.uniform(0.2, 0.4)
        lk = np.linalg.norm(chord) * rng.uniform(0.2, 0.4)
        rot = rng.uniform(-0.3, 0.3, 2) * min(span, 1.0)
        ctrl[j, 0] = pts[j]
        ctrl[j, 1] = pts[j] + lj * _rotate(tj, rot[0])
        ctrl[j, 2] = pts[k] - lk * _rotate(tk, rot[1])
    return Bezigon(ctrl)


def _rotate(v, a):
    c, s = np.cos(a), np.sin(a)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


@dataclass
class TermCheck:
    term: str
    coordinates: int
    flagged: int
    max_rel_error: float
    pass_fraction: float
    threshold: float
    required_fraction: float
    passed: bool

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.term:<10} {self.coordinates:>7d} {self.flagged:>7d} {self.max_rel_error:>12.3e} "
                f"{100 * self.pass_fraction:>8.2f}% {self.threshold:>9.0e}  {status}")


@dataclass
class GradcheckReport:
    trials: int
    seed: int
    depth: int
    h: float
    terms: list
    h_prior: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.terms)

    def table(self) -> str:
        head = f"{'term':<10} {'coords':>7} {'flagged':>7} {'max rel err':>12} {'within':>9} {'tol':>9}  result"
        return "\n".join([head] + [t.row() for t in self.terms])


def _summarize(term, errs, flagged, threshold, required, max_flagged=0.0) -> TermCheck:
    errs = np.asarray(errs, dtype=float)
    flagged = np.asarray(flagged, dtype=bool)
    live = errs[~flagged]
    frac = float(np.mean(live <= threshold)) if live.size else 1.0
    worst = float(live.max()) if live.size else 0.0
    n_flag = int(flagged.sum())
    ok = frac >= required and n_flag <= max_flagged * max(errs.size, 1)
    return TermCheck(term, int(errs.size), n_flag, worst, frac, threshold, required, ok)


def gradcheck(trials: int = 100, seed: int = 0, depth: int = 5, h: float = 1e-5,
              h_prior: float = 1e-6) -> GradcheckReport:
    """Compare every analytic gradient with central differences on random shapes.

    The data term is checked on a random image against a random background;
    the self-intersection prior is checked with its crossing parameters held
    fixed, which is the quantity its gradient describes. Priors use the
    smaller step ``h_prior``; the turning angle has kinks at 0 and pi, so
    joints whose stencil could straddle one are flagged.
    """
    if trials < 1 or depth < 1:
        raise ValueError("trials and depth must be positive")
    rng = np.random.default_rng(seed)
    grid = RasterGrid(depth)
    errs = {k: [] for k in ("data", "apt", "hpt", "lpt", "spt")}
    flags = {k: [] for k in errs}
    for _ in range(trials):
        bz = random_bezigon(rng)
        n = bz.n
        image = rng.uniform(0.0, 1.0, grid.shape + (3,))
        bg = rng.uniform(0.0, 1.0, 3)
        shape = VectorShape(bz, rng.uniform(0.0, 1.0, 3))
        ctx = EnergyContext(image, grid, bg, 1.0, np.ones(grid.shape, dtype=bool))
        p0 = bz.params()

        def e_data(p):
            return data_energy(shape.replace(bezigon=Bezigon.from_params(p)), ctx)

        g, _, degen = data_gradient(shape, ctx)
        fd = central_difference(e_data, p0, h)
        errs["data"].append(relative_error(g, fd))
        flags["data"].append(degen)

        def prior(fn):
            return lambda p: float(np.sum(fn(Bezigon.from_params(p))))

        _, ga, _ = apt_terms(bz.ctrl, with_grad=True)
        _, gh, _ = hpt_terms(bz.ctrl, with_grad=True)
        _, gl = lpt_terms(bz.segments, with_grad=True)
        for name, analytic, fn in (
                ("apt", ga.reshape(-1), lambda b: apt_terms(b.ctrl)[0]),
                ("hpt", gh.reshape(-1), lambda b: hpt_terms(b.ctrl)[0]),
                ("lpt", fold_segment_grad(gl), lambda b: lpt_terms(b.segments)[0])):
            errs[name].append(relative_error(analytic, central_difference(prior(fn), p0, h_prior)))
            flags[name].append(_kink_flags(bz, h_prior) if name == "apt" else np.zeros(6 * n, dtype=bool))

        # a crossing pair: use the curve's own if it has one, else an arbitrary arc
        pairs = self_intersections(bz)
        t1, t2 = (pairs[0].t1, pairs[0].t2) if pairs else sorted(rng.uniform(0.0, n, 2))
        _, gs = smooth_length(bz, t1, t2, with_grad=True)
        fs = central_difference(lambda p: smooth_length(Bezigon.from_params(p), t1, t2), p0, h_prior)
        errs["spt"].append(relative_error(gs, fs))
        flags["spt"].append(np.zeros(6 * n, dtype=bool))

    terms = [_summarize("data", np.concatenate(errs["data"]), np.concatenate(flags["data"]),
                        DATA_REL_TOL, DATA_PASS_FRACTION, DATA_MAX_FLAGGED)]
    for name in ("apt", "hpt", "lpt", "spt"):
        terms.append(_summarize(name, np.concatenate(errs[name]), np.concatenate(flags[name]),
                                PRIOR_REL_TOL, 1.0, PRIOR_MAX_FLAGGED))
    return GradcheckReport(trials, seed, depth, h, terms, h_prior)


def _kink_flags(bz: Bezigon, h: float) -> np.ndarray:
    """Flat 6N mask of the coordinates touching a joint near a turning-angle kink."""
    n = bz.n
    ang, _, degen = apt_terms(bz.ctrl)
    a = bz.ctrl[:, 0] - bz.ctrl[np.arange(n) - 1, 2]
    b = bz.ctrl[:, 1] - bz.ctrl[:, 0]
    reach = KINK_MARGIN * h / np.maximum(np.minimum(np.hypot(*a.T), np.hypot(*b.T)), 1e-300)
    near = degen | (ang < reach) | (np.pi - ang < reach)
    mask = np.zeros((n, 3, 2), dtype=bool)
    for j in np.nonzero(near)[0]:
        mask[j, 0] = mask[j, 1] = mask[j - 1, 2] = True
    return mask.reshape(-1)


# --------------------------------------------------------------------------
# energy scans


def _masked_energy(rendered, ctx: EnergyContext) -> float:
    r = rendered - ctx.image
    return ctx.scale * float(np.einsum("ij,ijc,ijc->", ctx.weight, r, r))


def energy_scan(shape: VectorShape, ctx: EnergyContext, param: tuple, values,
                oracle_samples: int = 1) -> np.ndarray:
    """Data energy as one control coordinate sweeps ``values``.

    ``param`` is ``(segment, point, coord)`` indexing the ``(N, 3, 2)``
    control array; values are in unit-square coordinates.  Returns rows of
    ``(value, E_data, E_data with the point-sampling oracle)``.
    """
    j, i, c = param
    ctrl = shape.bezigon.ctrl
    if not (0 <= j < ctrl.shape[0] and 0 <= i < 3 and c in (0, 1)):
        raise ValueError(f"parameter {param} out of range for {ctrl.shape[0]} segments")
    rows = []
    for v in np.asarray(values, dtype=float):
        p = ctrl.copy()
        p[j, i, c] = v
        s = shape.replace(bezigon=Bezigon(p))
        e = data_energy(s, ctx)
        a = oracle_coverage(s.bezigon, ctx.grid, oracle_samples)
        eo = _masked_energy(composite(a, s.color, ctx.background), ctx)
        rows.append((v, e, eo))
    return np.array(rows)


def max_jump(column) -> float:
    col = np.asarray(column, dtype=float)
    return float(np.max(np.abs(np.diff(col)))) if len(col) > 1 else 0.0
