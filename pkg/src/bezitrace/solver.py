"""Quasi-Newton minimisation and the overlapped piecewise schedule."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import (
    EnergyBreakdown,
    EnergyContext,
    EnergyWeights,
    PAPER_WEIGHTS,
    VectorShape,
    apt_terms,
    hpt_terms,
    lpt_terms,
    render,
    spt_terms,
    total_energy,
    total_gradient,
)
from .geometry import DEFAULT_INTERSECTION_TOL, Bezigon
from .raster import (DomainError, _coefficients, _decompose, _segment_gradients, analysis_window, coverage,
                     reconstruct_window)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 15
    grad_tol: float = 1e-6
    step_tol: float = 1e-10
    f_rel_tol: float = 1e-10
    history: int = 8
    max_step_px: float = 0.5
    max_sweeps: int = 6
    sweep_rel_tol: float = 1e-2
    global_pass: bool = True
    global_rounds: int = 2

    def __post_init__(self):
        if min(self.grad_tol, self.step_tol, self.sweep_rel_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.history < 1 or self.max_iters < 0 or self.max_sweeps < 1:
            raise ValueError("history, max_iters and max_sweeps must be positive")


@dataclass
class MinimizeResult:
    x: np.ndarray
    f: float
    iterations: int
    evaluations: int
    reason: str


def minimize(fun, x0, opts: SolverOptions = SolverOptions(), max_step: float = np.inf) -> MinimizeResult:
    """L-BFGS with Armijo backtracking.

    ``fun(x)`` returns ``(value, gradient)``.  Non-finite trial values shrink the
    step, and the trial step never moves a coordinate by more than
    ``max_step``.  The returned value never exceeds the value at ``x0``.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    nev = 1
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    mem: deque = deque(maxlen=opts.history)
    reason = "max_iters"
    it = 0
    for it in range(opts.max_iters):
        if np.max(np.abs(g), initial=0.0) <= opts.grad_tol:
            reason = "grad_tol"
            break
        d = -_two_loop(g, mem)
        slope = float(g @ d)
        if not slope < 0:
            mem.clear()
            d = -g
            slope = float(g @ d)
        alpha = min(1.0, max_step / max(np.max(np.abs(d)), 1e-300))
        if not mem:
            # unscaled first step: at most a unit move
            alpha = min(alpha, 1.0 / max(np.max(np.abs(d)), 1e-300))
        accepted = False
        for _ in range(50):
            xn = x + alpha * d
            fn, gn = fun(xn)
            nev += 1
            if np.isfinite(fn) and fn <= f + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
            if alpha * np.max(np.abs(d)) < opts.step_tol:
                break
        if not accepted:
            reason = "line_search"
            break
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            mem.append((s, y, 1.0 / sy))
        f_old = f
        x, f, g = xn, fn, gn
        if np.max(np.abs(s)) <= opts.step_tol:
            reason = "step_tol"
            it += 1
            break
        if f_old - f <= opts.f_rel_tol * max(abs(f_old), 1e-300):
            reason = "f_rel_tol"
            it += 1
            break
    else:
        it = opts.max_iters
    return MinimizeResult(x, float(f), it, nev, reason)


def _two_loop(g, mem):
    q = g.copy()
    if not mem:
        return q
    alphas = []
    for s, y, rho in reversed(mem):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = mem[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(mem, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


# --------------------------------------------------------------------------
# colour


def optimize_color(shape: VectorShape, ctx: EnergyContext, alpha=None) -> np.ndarray:
    """Least-squares uniform colour for fixed coverage, clamped to [0, 1]."""
    if alpha is None:
        alpha = coverage(shape.bezigon, ctx.grid)
    sel = ctx.weight > 0
    a = np.clip(alpha, 0.0, 1.0)[sel]
    wt = ctx.weight[sel]
    den = float(np.sum(wt * a * a))
    if den <= 0.0:
        return shape.color.copy()
    img = ctx.image[sel]
    bg = ctx.background[sel]
    num = np.einsum("p,pc->c", wt * a, img - (1.0 - a)[:, None] * bg)
    return np.clip(num / den, 0.0, 1.0)


# --------------------------------------------------------------------------
# piecewise optimisation


def piece_indices(n: int, j: int) -> np.ndarray:
    """Flat indices of the ten free scalars of piece ``j``: the interior
    points of segments ``j`` and ``j+1`` and the joint between them."""
    j = j % n
    k = (j + 1) % n
    slots = [(j, 1), (j, 2), (k, 0), (k, 1), (k, 2)]
    return np.array([6 * a + 2 * i + c for a, i in slots for c in (0, 1)])


class PieceObjective:
    """Total energy as a function of one piece's ten free parameters.

    Coefficients of the untouched segments are computed once; priors are
    evaluated on the two affected segments and the three joints next to them,
    except for the self-intersection term, which is always global.
    """

    def __init__(self, shape: VectorShape, ctx: EnergyContext, weights: EnergyWeights, j: int,
                 tol: float = DEFAULT_INTERSECTION_TOL):
        self.shape = shape
        self.ctx = ctx
        self.weights = weights.in_unit_coords(ctx.unit)
        self.tol = tol
        bz = shape.bezigon
        n = bz.n
        self.n = n
        self.j = j % n
        self.k = (j + 1) % n
        self.free = piece_indices(n, j)
        self.base = bz.params()
        self.local_segments = np.array([self.j, self.k])
        self.joints = np.unique(np.array([self.j, self.k, (self.j + 2) % n]))
        fixed = [i for i in range(n) if i not in (self.j, self.k)]
        segs = bz.segments
        if fixed:
            self.fixed_coeffs = _coefficients(_decompose(segs[fixed], ctx.grid), ctx.grid)
        else:
            self.fixed_coeffs = None
        # Moving one piece only changes coverage inside the hull of its old and
        # new control points, so the data term is re-evaluated on that window
        # and the rest comes from a prefix-sum table of the current residual.
        self.base_points = segs[self.local_segments].reshape(-1, 2)
        r = render(shape, ctx, coverage(bz, ctx.grid)) - ctx.image
        e = ctx.scale * np.einsum("ijc,ijc->ij", r, r) * ctx.weight
        self.base_data = float(e.sum())
        self.prefix = np.zeros((e.shape[0] + 1, e.shape[1] + 1))
        self.prefix[1:, 1:] = e.cumsum(0).cumsum(1)

    def _window(self, segs):
        pts = np.concatenate([self.base_points, segs.reshape(-1, 2)]) * self.ctx.unit
        lo = np.floor(pts.min(axis=0)).astype(int) - 1
        hi = np.ceil(pts.max(axis=0)).astype(int) + 1
        n = self.ctx.grid.size
        return slice(max(lo[1], 0), min(hi[1], n)), slice(max(lo[0], 0), min(hi[0], n))

    def _window_data(self, coeffs, rows, cols):
        """Data energy and per-pixel ``dE/d alpha`` on the window only."""
        ctx = self.ctx
        alpha = reconstruct_window(coeffs, ctx.grid, rows, cols)
        bg = ctx.background[rows, cols]
        dc = self.shape.color - bg
        r = np.clip(alpha, 0.0, 1.0)[..., None] * dc + bg - ctx.image[rows, cols]
        wt = ctx.weight[rows, cols][..., None]
        P = self.prefix
        outside = self.base_data - (P[rows.stop, cols.stop] - P[rows.start, cols.stop]
                                    - P[rows.stop, cols.start] + P[rows.start, cols.start])
        f = outside + ctx.scale * float(np.einsum("ijc,ijc,ijc->", wt, r, r))
        live = (alpha > -1e-12) & (alpha < 1.0 + 1e-12)
        w = 2.0 * ctx.scale * np.einsum("ijc,ijc->ij", wt * r, dc) * live
        return f, w

    def x0(self) -> np.ndarray:
        return self.base[self.free].copy()

    def params(self, x) -> np.ndarray:
        p = self.base.copy()
        p[self.free] = x
        return p

    def __call__(self, x):
        p = self.params(x)
        ctrl = p.reshape(-1, 3, 2)
        bz = Bezigon(ctrl)
        segs = bz.segments[self.local_segments]
        grid = self.ctx.grid
        try:
            dec = _decompose(segs, grid)
        except DomainError:
            return np.inf, np.zeros_like(x)
        coeffs = _coefficients(dec, grid)
        if self.fixed_coeffs is not None:
            coeffs = coeffs + self.fixed_coeffs
        rows, cols = self._window(segs)
        f, w = self._window_data(coeffs, rows, cols)
        gseg, _ = _segment_gradients(dec, grid, analysis_window(w, grid, rows, cols))
        g = np.zeros((self.n, 3, 2))
        for row, sj in enumerate(self.local_segments):
            g[sj] += gseg[row, :3]
            g[(sj + 1) % self.n, 0] += gseg[row, 3]

        wt = self.weights
        if wt.apt:
            ang, ga, _ = apt_terms(ctrl, self.joints, with_grad=True)
            f += wt.apt * float(ang.sum())
            g += wt.apt * ga
        if wt.hpt:
            hv, gh, _ = hpt_terms(ctrl, self.local_segments, with_grad=True)
            f += wt.hpt * float(hv.sum())
            g += wt.hpt * gh
        if wt.lpt:
            lv, gl = lpt_terms(segs, with_grad=True)
            f += wt.lpt * float(lv.sum())
            for row, sj in enumerate(self.local_segments):
                g[sj] += wt.lpt * gl[row, :3]
                g[(sj + 1) % self.n, 0] += wt.lpt * gl[row, 3]
        gflat = g.reshape(-1)
        if wt.spt:
            sv, gs, _ = spt_terms(bz, self.tol, with_grad=True)
            f += wt.spt * sv
            gflat = gflat + wt.spt * gs
        return f, gflat[self.free]


@dataclass
class PieceResult:
    j: int
    accepted: bool
    energy_before: float
    energy_after: float
    iterations: int
    reason: str


def optimize_piece(shape: VectorShape, ctx: EnergyContext, weights: EnergyWeights, j: int,
                   opts: SolverOptions = SolverOptions(), before: EnergyBreakdown | None = None):
    """Minimise over one piece; the result is kept only if the total energy does not rise.

    Returns ``(shape, breakdown, PieceResult)``.
    """
    if before is None:
        before = total_energy(shape, ctx, weights)
    obj = PieceObjective(shape, ctx, weights, j)
    try:
        res = minimize(obj, obj.x0(), opts, opts.max_step_px / ctx.unit)
    except (ValueError, FloatingPointError) as exc:
        log.debug("piece %d failed: %s", j, exc)
        return shape, before, PieceResult(j, False, before.total, before.total, 0, f"error: {exc}")
    cand = shape.replace(bezigon=Bezigon.from_params(obj.params(res.x)))
    try:
        after = total_energy(cand, ctx, weights)
    except DomainError:
        after = None
    if after is not None and after.total <= before.total:
        return cand, after, PieceResult(j, True, before.total, after.total, res.iterations, res.reason)
    return shape, before, PieceResult(j, False, before.total, before.total, res.iterations, res.reason)


@dataclass
class OptimizeReport:
    trace: list = field(default_factory=list)        # EnergyBreakdown per sweep boundary
    pieces: list = field(default_factory=list)
    sweeps: int = 0
    iterations: int = 0
    reason: str = ""
    global_pass: dict | None = None
    flags: set = field(default_factory=set)

    def as_dict(self) -> dict:
        return {
            "trace": [b.as_dict() for b in self.trace],
            "sweeps": self.sweeps,
            "iterations": self.iterations,
            "reason": self.reason,
            "pieces_rejected": sum(not p.accepted for p in self.pieces),
            "global_pass": self.global_pass,
            "flags": sorted(self.flags),
        }


def _global_pass(shape, ctx, weights, opts, before, report):
    """Joint refinement of all control points, alternating with the colour solve."""
    info = {"rounds": 0, "accepted": 0, "iterations": 0}
    for _ in range(opts.global_rounds):
        info["rounds"] += 1

        def fun(p, shape=shape):
            try:
                cand = shape.replace(bezigon=Bezigon.from_params(p))
                e = total_energy(cand, ctx, weights).total
                g, _ = total_gradient(cand, ctx, weights)
            except DomainError:
                return np.inf, np.zeros_like(p)
            return e, g

        res = minimize(fun, shape.bezigon.params(), opts, opts.max_step_px / ctx.unit)
        info["iterations"] += res.iterations
        report.iterations += res.iterations
        cand = shape.replace(bezigon=Bezigon.from_params(res.x))
        cand = cand.replace(color=optimize_color(cand, ctx))
        after = total_energy(cand, ctx, weights)
        if after.total <= before.total:
            shape, before = cand, after
            info["accepted"] += 1
        else:
            break
    return shape, before, info


def optimize_bezigon(shape: VectorShape, ctx: EnergyContext, weights: EnergyWeights = PAPER_WEIGHTS,
                     opts: SolverOptions = SolverOptions()):
    """Sweep all overlapped pieces until the energy settles, then optionally
    refine everything jointly.  Returns ``(shape, OptimizeReport)``."""
    report = OptimizeReport()
    current = total_energy(shape, ctx, weights)
    report.trace.append(current)
    report.flags.update(current.flags)
    report.reason = "max_sweeps"
    for sweep in range(opts.max_sweeps):
        start = current.total
        for j in range(shape.bezigon.n):
            shape, current, pr = optimize_piece(shape, ctx, weights, j, opts, current)
            report.pieces.append(pr)
            report.iterations += pr.iterations
            report.flags.update(current.flags)
        report.sweeps = sweep + 1
        report.trace.append(current)
        if start - current.total < opts.sweep_rel_tol * max(abs(start), 1e-300):
            report.reason = "converged"
            break
    if opts.global_pass:
        shape, current, info = _global_pass(shape, ctx, weights, opts, current, report)
        report.global_pass = info
        report.trace.append(current)
    return shape, report
