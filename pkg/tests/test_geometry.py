import numpy as np
import pytest
from hypothesis import given, strategies as st

from bezitrace.diagnostics import random_bezigon
from bezitrace.geometry import (Bezigon, _edge_crossings, arc_length, de_casteljau, eval_bezigon, eval_segment,
                                flatten, joint_tangents, polyline_length, self_intersections)
from bezitrace.shapes import ARC_K, disc, polygon

from conftest import brute_crossings, dense_points

seeds = st.integers(0, 2**31 - 1)


def quarter_circle():
    return np.array([[1.0, 0.0], [1.0, ARC_K], [ARC_K, 1.0], [0.0, 1.0]])


def casteljau_point(seg, t):
    p = np.asarray(seg, dtype=float)
    while len(p) > 1:
        p = (1 - t) * p[:-1] + t * p[1:]
    return p[0]


# --- construction ----------------------------------------------------------

def test_bezigon_rejects_single_segment():
    with pytest.raises(ValueError):
        Bezigon(np.zeros((1, 3, 2)))


def test_bezigon_rejects_nonfinite():
    c = disc().ctrl.copy()
    c[0, 1, 0] = np.nan
    with pytest.raises(ValueError):
        Bezigon(c)


def test_from_segments_requires_shared_endpoints():
    seg = disc().segments.copy()
    Bezigon.from_segments(seg)
    seg[1, 0, 0] += 1e-12
    with pytest.raises(ValueError):
        Bezigon.from_segments(seg)


def test_param_layout():
    bz = disc(arcs=3)
    p = bz.params()
    j, i, c = 2, 1, 1
    assert p[6 * j + 2 * i + c] == bz.ctrl[j, i, c]
    assert Bezigon.from_params(p) == bz


# --- evaluation -------------------------------------------------------------

def test_eval_at_zero_is_p0(rng):
    seg = rng.uniform(0, 1, (4, 2))
    assert np.array_equal(eval_segment(seg, 0.0), seg[0])


def test_eval_symmetric_segment_midpoint():
    seg = np.array([[0, 0], [0, 0], [1, 1], [1, 1]], dtype=float)
    np.testing.assert_allclose(eval_segment(seg, 0.5), [0.5, 0.5], atol=1e-15)


@given(seeds, st.floats(0.0, 1.0))
def test_eval_matches_de_casteljau(seed, t):
    seg = np.random.default_rng(seed).uniform(-1, 1, (4, 2))
    np.testing.assert_allclose(eval_segment(seg, t), casteljau_point(seg, t), atol=1e-12)
    np.testing.assert_allclose(de_casteljau(seg, t)[2], casteljau_point(seg, t), atol=1e-12)


def test_eval_bezigon_integer_parameter_hits_anchor():
    bz = disc(arcs=5)
    for j in range(5):
        np.testing.assert_array_equal(eval_bezigon(bz, float(j)), bz.ctrl[j, 0])


@given(seeds)
def test_closure_exact(seed):
    bz = random_bezigon(np.random.default_rng(seed))
    assert np.array_equal(eval_bezigon(bz, 0.0), eval_bezigon(bz, float(bz.n)))


def test_eval_bezigon_dispatch():
    bz = disc(arcs=2)
    np.testing.assert_allclose(eval_bezigon(bz, 1.5), eval_segment(bz.segments[1], 0.5), atol=0)


def test_eval_bezigon_rejects_out_of_range():
    bz = disc()
    with pytest.raises(ValueError):
        eval_bezigon(bz, -0.1)
    with pytest.raises(ValueError):
        eval_bezigon(bz, 4.01)


# --- arc length ---------------------------------------------------------------

def test_arc_length_straight_segment():
    length = 0.7
    bz = polygon([(0.0, 0.0), (length, 0.0)])
    assert arc_length(bz, 0.0, 1.0) == pytest.approx(length, abs=1e-9)


def test_arc_length_quarter_circle():
    seg = quarter_circle()
    bz = Bezigon(np.stack([seg[:3], [seg[3], seg[3] * 0.5 + seg[0] * 0.5, seg[0]]]))
    t = np.linspace(0, 1, 200001)
    oracle = polyline_length(np.array([casteljau_point(seg, v) for v in t[::20]]))
    assert arc_length(bz, 0.0, 1.0) == pytest.approx(oracle, abs=1e-6)
    assert arc_length(bz, 0.0, 1.0) == pytest.approx(np.pi / 2, abs=2e-3)


def test_arc_length_four_arc_circle():
    bz = disc((0.0, 0.0), 1.0)
    oracle = polyline_length(dense_points(bz, 4000))
    assert arc_length(bz) == pytest.approx(oracle, abs=1e-6)
    assert arc_length(bz) == pytest.approx(2 * np.pi, abs=1e-2)


@given(seeds, st.floats(0.01, 0.99))
def test_subdivision_consistency(seed, u):
    seg = np.random.default_rng(seed).uniform(0, 1, (4, 2))
    left, right, _ = de_casteljau(seg, u)
    whole = Bezigon(np.stack([seg[:3], [seg[3], seg[3], seg[0]]]))
    halves = Bezigon(np.stack([left[:3], right[:3], [seg[3], seg[3], seg[0]]]))
    assert arc_length(halves, 0.0, 2.0) == pytest.approx(arc_length(whole, 0.0, 1.0), abs=2e-8)


@given(seeds, st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_arc_length_additive(seed, fr):
    bz = random_bezigon(np.random.default_rng(seed))
    t1, t2, t3 = sorted(f * bz.n for f in fr)
    total = arc_length(bz, t1, t3)
    assert arc_length(bz, t1, t2) + arc_length(bz, t2, t3) == pytest.approx(total, abs=2e-8)


# --- joint tangents -------------------------------------------------------------

def test_joint_tangents_collinear_for_smooth_circle():
    a, b = joint_tangents(disc(), 1)
    assert a[0] * b[1] - a[1] * b[0] == pytest.approx(0.0, abs=1e-15)


def test_joint_tangents_square_corner():
    e = 0.6
    sq = polygon([(0, 0), (e, 0), (e, e), (0, e)])
    a, b = joint_tangents(sq, 1)
    np.testing.assert_allclose(a, [e / 3, 0.0], atol=1e-15)
    np.testing.assert_allclose(b, [0.0, e / 3], atol=1e-15)


def test_joint_tangents_wraps_to_last_segment():
    bz = disc(arcs=3)
    a, _ = joint_tangents(bz, 0)
    np.testing.assert_array_equal(a, bz.ctrl[0, 0] - bz.ctrl[2, 2])


# --- flatten --------------------------------------------------------------------

def test_flatten_straight_segment_has_two_vertices_per_segment():
    bz = polygon([(0.1, 0.1), (0.9, 0.2)])
    for tol in (1e-1, 1e-6):
        pts, ts = flatten(bz, tol)
        assert len(pts) == 3
        np.testing.assert_allclose(ts, [0.0, 1.0, 2.0])


def test_flatten_length_close_to_arc_length():
    seg = quarter_circle()
    bz = Bezigon(np.stack([seg[:3], [seg[3], seg[3], seg[0]]]))
    pts, ts = flatten(bz, 1e-3)
    quarter = pts[ts <= 1.0]
    assert abs(polyline_length(quarter) - arc_length(bz, 0.0, 1.0)) <= 1e-3


@given(seeds)
def test_flatten_refinement_monotone(seed):
    bz = random_bezigon(np.random.default_rng(seed))
    counts = [len(flatten(bz, tol)[0]) for tol in (1e-2, 5e-3, 2.5e-3, 1.25e-3)]
    assert counts == sorted(counts)


def _point_polyline_distance(pts, poly):
    a, b = poly[:-1], poly[1:]
    d = b - a
    ll = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        s = np.clip(np.einsum("ij,ij->i", p - a, d) / ll, 0, 1)
        out[i] = np.min(np.hypot(*(a + s[:, None] * d - p).T))
    return out


@given(seeds, st.sampled_from([1e-2, 1e-3, 1e-4]))
def test_flatten_error_bound(seed, tol):
    bz = random_bezigon(np.random.default_rng(seed))
    poly, _ = flatten(bz, tol)
    samples = dense_points(bz, 1000)
    assert _point_polyline_distance(samples, poly).max() <= tol


# --- self intersections -----------------------------------------------------------

def test_convex_circle_has_no_intersections():
    assert self_intersections(disc()) == []


def test_figure_eight_single_crossing():
    bz = Bezigon(np.array([[(0.1, 0.3), (1.0, 0.3), (0.9, 0.8)], [(0.5, 0.8), (0.0, 0.8), (0.5, 0.2)]]))
    oracle = brute_crossings(dense_points(bz))
    found = self_intersections(bz)
    assert len(oracle) == 1 and len(found) == 1
    np.testing.assert_allclose(found[0].point, oracle[0], atol=1e-6)
    f = found[0]
    assert f.t1 < f.t2
    assert np.hypot(*(eval_bezigon(bz, f.t1) - eval_bezigon(bz, f.t2))) <= 1e-4


def test_near_touch_above_tolerance_is_not_a_crossing():
    # two lobes of a pinched shape approach within 0.01 but do not touch
    bz = polygon([(0.1, 0.1), (0.5, 0.49), (0.9, 0.1), (0.9, 0.9), (0.5, 0.51), (0.1, 0.9)])
    assert len(brute_crossings(dense_points(bz))) == 0
    assert self_intersections(bz) == []


@given(seeds, st.integers(1, 5))
def test_intersections_invariant_under_rotation(seed, k):
    rng = np.random.default_rng(seed)
    bz = random_bezigon(rng)
    jit = Bezigon(bz.ctrl + rng.normal(0.0, 0.06, bz.ctrl.shape))
    a = sorted(map(tuple, np.round([p.point for p in self_intersections(jit)], 6)))
    b = sorted(map(tuple, np.round([p.point for p in self_intersections(jit.rotated(k % jit.n))], 6)))
    assert len(a) == len(b)
    if a:
        np.testing.assert_allclose(a, b, atol=1e-4)


@given(seeds)
def test_pruned_edge_crossings_match_all_pairs(seed):
    rng = np.random.default_rng(seed)
    bz = random_bezigon(rng)
    bz = Bezigon(bz.ctrl + rng.normal(0.0, 0.08, bz.ctrl.shape))
    pts, ts = flatten(bz, 1e-3)
    segs = bz.segments
    blocks = (np.searchsorted(ts, np.arange(bz.n)), segs.min(axis=1), segs.max(axis=1))
    fast = sorted(zip(*[x.tolist() for x in _edge_crossings(pts, blocks)[:2]]))
    slow = sorted(zip(*[x.tolist() for x in _edge_crossings(pts)[:2]]))
    assert fast == slow


@given(seeds)
def test_crossing_count_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    bz = random_bezigon(rng)
    bz = Bezigon(bz.ctrl + rng.normal(0.0, 0.08, bz.ctrl.shape))
    found = self_intersections(bz)
    oracle = brute_crossings(dense_points(bz, 400))
    # skip configurations with crossings closer than the oracle can resolve
    if len(oracle) > 1:
        gap = np.min([np.hypot(*(p - q)) for i, p in enumerate(oracle) for q in oracle[i + 1:]])
        if gap < 1e-3:
            return
    assert len(found) == len(oracle)
