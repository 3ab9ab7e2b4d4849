import numpy as np
import pytest
import shapely
from hypothesis import given, strategies as st

from bezitrace.diagnostics import central_difference, random_bezigon, relative_error
from bezitrace.energy import VectorShape
from bezitrace.geometry import Bezigon
from bezitrace.raster import (DomainError, HaarIndex, RasterGrid, analysis, analysis_window, coverage,
                              coverage_gradient, cubic_roots, monotone_splits, oracle_coverage, oracle_rasterize,
                              rasterize, reconstruct, reconstruct_window, wavelet_coefficients)
from bezitrace.shapes import disc, polygon

seeds = st.integers(0, 2**31 - 1)


def unit_square():
    return polygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


def random_polygon(rng, k=None):
    """Positively oriented star-shaped polygon inside the unit square."""
    k = k or int(rng.integers(3, 9))
    while True:
        ang = np.sort(rng.uniform(0, 2 * np.pi, k))
        if np.diff(np.r_[ang, ang[0] + 2 * np.pi]).max() < 0.9 * np.pi:
            break
    r = rng.uniform(0.1, 0.45, k)
    return np.stack([0.5 + r * np.cos(ang), 0.5 + r * np.sin(ang)], axis=1)


def exact_pixel_areas(points, grid):
    """Per-pixel clipped polygon area from shapely, as a fraction of the pixel."""
    n = grid.size
    poly = shapely.Polygon(points * n)
    xs, ys = np.meshgrid(np.arange(n), np.arange(n))
    boxes = shapely.box(xs.ravel(), ys.ravel(), xs.ravel() + 1, ys.ravel() + 1)
    return shapely.area(shapely.intersection(boxes, poly)).reshape(n, n)


# --- cubic roots ----------------------------------------------------------------

def test_cubic_roots_endpoints():
    roots, zero = cubic_roots([0.0, -1.0, 0.0, 1.0])
    assert not zero
    np.testing.assert_allclose(roots, [0.0, 1.0], atol=1e-12)


def test_cubic_roots_factored():
    c = np.polynomial.polynomial.polyfromroots([0.25, 0.5, 0.75])
    roots, _ = cubic_roots(c)
    np.testing.assert_allclose(roots, [0.25, 0.5, 0.75], atol=1e-12)


def test_cubic_roots_zero_polynomial_flagged():
    roots, zero = cubic_roots([0, 0, 0, 0])
    assert zero and len(roots) == 0


@given(seeds)
def test_cubic_roots_match_sign_change_oracle(seed):
    c = np.random.default_rng(seed).uniform(-1, 1, 4)
    t = np.linspace(0.0, 1.0, 1_000_001)
    f = np.polynomial.polynomial.polyval(t, c)
    idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
    roots, _ = cubic_roots(c)
    inner = roots[(roots > 1e-6) & (roots < 1 - 1e-6)]
    # tangential double roots produce no sign change; skip those draws
    fp = np.polynomial.polynomial.polyval(inner, np.polynomial.polynomial.polyder(c))
    if np.any(np.abs(fp) < 1e-3):
        return
    assert len(inner) == len(idx)
    np.testing.assert_allclose(inner, t[idx], atol=2e-6)
    assert np.all(np.abs(np.polynomial.polynomial.polyval(roots, c)) < 1e-12)


# --- monotone splits ---------------------------------------------------------------

def test_monotone_splits_inside_one_cell_is_empty():
    g = RasterGrid(3)
    seg = np.array([[0.51, 0.51], [0.52, 0.53], [0.55, 0.54], [0.56, 0.57]])
    assert len(monotone_splits(seg, g)) == 0


def test_monotone_splits_horizontal_line():
    g = RasterGrid(2)
    seg = np.array([[0.4, 0.3], [0.4 + 0.2 / 3, 0.3], [0.4 + 0.4 / 3, 0.3], [0.6, 0.3]])
    np.testing.assert_allclose(monotone_splits(seg, g), [0.5], atol=1e-12)
    fine = monotone_splits(seg, RasterGrid(4))
    np.testing.assert_allclose(fine, [(7 / 16 - 0.4) / 0.2, 0.5, (9 / 16 - 0.4) / 0.2], atol=1e-12)


@pytest.mark.parametrize("d", [3, 5, 7])
def test_monotone_splits_diagonal_count(d):
    eps = 0.3 / (1 << d)
    p, q = np.array([eps, eps * 0.7]), np.array([1 - eps * 0.6, 1 - eps])
    seg = np.array([p, p + (q - p) / 3, p + 2 * (q - p) / 3, q])
    n = 1 << d
    # every interior pixel line x = m/n and y = m/n is crossed once
    assert len(monotone_splits(seg, RasterGrid(d))) == 2 * (n - 1)


# --- coefficients -------------------------------------------------------------------

def test_degenerate_bezigon_has_zero_coefficients():
    bz = Bezigon(np.full((3, 3, 2), 0.4))
    assert np.all(wavelet_coefficients(bz, RasterGrid(3)).flat() == 0.0)


def test_unit_square_scaling_coefficient_is_one():
    c = wavelet_coefficients(unit_square(), RasterGrid(3))
    assert c[HaarIndex(0, 0, 0, (0, 0))] == pytest.approx(1.0, abs=1e-15)


@given(seeds)
def test_reversal_negates_coefficients(seed):
    bz = random_bezigon(np.random.default_rng(seed))
    g = RasterGrid(4)
    a = wavelet_coefficients(bz, g).flat()
    b = wavelet_coefficients(bz.reversed(), g).flat()
    np.testing.assert_allclose(b, -a, atol=1e-13)
    np.testing.assert_allclose(coverage(bz.reversed(), g), -coverage(bz, g), atol=1e-13)


def test_curve_outside_domain_rejected():
    with pytest.raises(DomainError):
        wavelet_coefficients(disc((0.5, 0.5), 0.6), RasterGrid(3))


def test_untouched_cells_are_zero():
    g = RasterGrid(4)
    c = wavelet_coefficients(disc((0.25, 0.25), 0.1), g)
    # the far quadrant at scale 1 never meets the curve
    assert c.c10[1][1, 1] == 0.0 and c.c01[1][1, 1] == 0.0 and c.c11[1][1, 1] == 0.0


# --- reconstruction ----------------------------------------------------------------------

def test_unit_square_full_coverage():
    assert np.all(coverage(unit_square(), RasterGrid(2)) == 1.0)


@pytest.mark.parametrize("d", [2, 4, 6])
def test_half_pixel_row(d):
    g = RasterGrid(d)
    h = 0.5 + 1.0 / (1 << (d + 1))
    a = coverage(polygon([(0, 0), (1, 0), (1, h), (0, h)]), g)
    row = (1 << d) // 2
    np.testing.assert_allclose(a[row], 0.5, atol=1e-12)
    np.testing.assert_allclose(a[:row], 1.0, atol=1e-12)
    np.testing.assert_allclose(a[row + 1:], 0.0, atol=1e-12)


@given(seeds)
def test_polygon_coverage_matches_exact_area(seed):
    rng = np.random.default_rng(seed)
    pts = random_polygon(rng)
    g = RasterGrid(5)
    np.testing.assert_allclose(coverage(polygon(pts), g), exact_pixel_areas(pts, g), atol=1e-9)


def test_curved_coverage_matches_oracle(rng):
    g = RasterGrid(6)
    bz = random_bezigon(rng)
    a = coverage(bz, g)
    o = oracle_coverage(bz, g, 64)
    assert np.max(np.abs(a - o)) <= 0.02


@given(seeds)
def test_alpha_bounded_for_simple_curves(seed):
    a = coverage(random_bezigon(np.random.default_rng(seed)), RasterGrid(5))
    assert a.min() >= -1e-6 and a.max() <= 1 + 1e-6


@given(seeds)
def test_resolution_consistency(seed):
    bz = random_bezigon(np.random.default_rng(seed))
    fine = coverage(bz, RasterGrid(5))
    coarse = coverage(bz, RasterGrid(4))
    down = fine.reshape(16, 2, 16, 2).mean(axis=(1, 3))
    np.testing.assert_allclose(down, coarse, atol=1e-9)


def test_reconstruct_grid_mismatch():
    c = wavelet_coefficients(disc(), RasterGrid(3))
    with pytest.raises(ValueError):
        reconstruct(c, RasterGrid(4))


@given(seeds)
def test_analysis_is_adjoint_of_reconstruct(seed):
    rng = np.random.default_rng(seed)
    g = RasterGrid(4)
    c = wavelet_coefficients(random_bezigon(rng), g)
    w = rng.normal(size=g.shape)
    assert np.sum(w * reconstruct(c, g)) == pytest.approx(np.dot(analysis(w, g).flat(), c.flat()), rel=1e-12)


@given(seeds, st.integers(0, 15), st.integers(1, 16), st.integers(0, 15), st.integers(1, 16))
def test_windowed_transforms_match_full(seed, r0, rh, c0, cw):
    rng = np.random.default_rng(seed)
    g = RasterGrid(4)
    rows = slice(r0, min(16, r0 + rh))
    cols = slice(c0, min(16, c0 + cw))
    c = wavelet_coefficients(random_bezigon(rng), g)
    np.testing.assert_allclose(reconstruct_window(c, g, rows, cols), reconstruct(c, g)[rows, cols], atol=1e-12)
    w = np.zeros(g.shape)
    w[rows, cols] = rng.normal(size=w[rows, cols].shape)
    np.testing.assert_allclose(analysis_window(w[rows, cols], g, rows, cols).flat(), analysis(w, g).flat(),
                               atol=1e-12)


# --- compositing --------------------------------------------------------------------

def test_rasterize_full_coverage_is_shape_color():
    img = rasterize(VectorShape(unit_square(), np.array([0.2, 0.4, 0.6])), np.array([1.0, 0.0, 0.5]), RasterGrid(3))
    np.testing.assert_allclose(img, np.broadcast_to([0.2, 0.4, 0.6], img.shape), atol=1e-15)


def test_rasterize_zero_area_is_background():
    bg = np.array([0.3, 0.3, 0.9])
    img = rasterize(VectorShape(Bezigon(np.full((2, 3, 2), 0.5)), np.zeros(3)), bg, RasterGrid(3))
    np.testing.assert_array_equal(img, np.broadcast_to(bg, img.shape))


def test_rasterize_half_row_is_linear_blend():
    d = 3
    h = 0.5 + 1.0 / (1 << (d + 1))
    shape = VectorShape(polygon([(0, 0), (1, 0), (1, h), (0, h)]), np.ones(1))
    img = rasterize(shape, np.zeros(1), RasterGrid(d))
    np.testing.assert_allclose(img[4, :, 0], 0.5, atol=1e-12)


# --- oracle -----------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 3, 8])
def test_oracle_unit_square_matches_rasterize(n):
    g = RasterGrid(3)
    shape = VectorShape(unit_square(), np.array([0.1, 0.9, 0.4]))
    np.testing.assert_allclose(oracle_rasterize(shape, np.zeros(3), g, n), rasterize(shape, np.zeros(3), g),
                               atol=1e-12)


def test_oracle_single_sample_is_centre_test():
    g = RasterGrid(4)
    pts = random_polygon(np.random.default_rng(5))
    centres = (np.arange(16) + 0.5) / 16
    xs, ys = np.meshgrid(centres, centres)
    inside = shapely.contains_xy(shapely.Polygon(pts), xs, ys)
    np.testing.assert_array_equal(oracle_coverage(polygon(pts), g, 1), inside.astype(float))


def test_oracle_error_shrinks_with_samples():
    g = RasterGrid(4)
    pts = random_polygon(np.random.default_rng(9))
    exact = exact_pixel_areas(pts, g)
    errs = [np.abs(oracle_coverage(polygon(pts), g, n) - exact).max() for n in (4, 16, 64)]
    assert errs[2] < errs[1] < errs[0]
    # stratified sampling error on a straight edge is at most ~1/n per pixel
    for n, e in zip((4, 16, 64), errs):
        assert e <= 1.0 / n + 1e-9


def test_oracle_rejects_zero_samples():
    with pytest.raises(ValueError):
        oracle_coverage(disc(), RasterGrid(2), 0)


# --- continuity ------------------------------------------------------------------------

def test_coverage_is_continuous_in_control_points():
    g = RasterGrid(5)
    base = disc((0.5, 0.5), 0.3).ctrl

    def jumps(h):
        vals = []
        for v in np.arange(0.45, 0.55, h):
            c = base.copy()
            c[1, 1, 1] = v
            vals.append(coverage(Bezigon(c), g))
        return np.max(np.abs(np.diff(vals, axis=0)))

    coarse, fine = jumps(2e-3), jumps(1e-3)
    assert fine <= 0.6 * coarse


# --- gradient ------------------------------------------------------------------------------

def test_zero_weights_give_zero_gradient():
    g = RasterGrid(4)
    res = coverage_gradient(disc(), g, np.zeros(g.shape))
    assert np.all(res.grad == 0.0)


def test_translation_preserves_total_coverage():
    g = RasterGrid(5)
    grad = coverage_gradient(disc((0.45, 0.52), 0.2, arcs=5), g, np.ones(g.shape)).grad.reshape(-1, 3, 2)
    assert abs(grad[..., 0].sum()) < 1e-10
    assert abs(grad[..., 1].sum()) < 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_coverage_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    g = RasterGrid(4)
    bz = random_bezigon(rng)
    w = rng.normal(size=g.shape)
    res = coverage_gradient(bz, g, w)
    fd = central_difference(lambda p: float(np.sum(w * coverage(Bezigon.from_params(p), g))), bz.params(), 1e-6)
    err = relative_error(res.grad, fd)[~res.degenerate]
    assert np.mean(err <= 1e-3) >= 0.99
