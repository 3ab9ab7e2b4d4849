import numpy as np
import pytest

from bezitrace.energy import VectorShape
from bezitrace.imaging import VectorDocument, psnr
from bezitrace.pipeline import render_document, render_shapes, vectorize, worker_count
from bezitrace.raster import RasterGrid, coverage, oracle_coverage
from bezitrace.shapes import disc, rounded_rect
from bezitrace.solver import SolverOptions

FAST = SolverOptions(max_sweeps=2, global_rounds=1)


def disc_image(size=64, color=(0.8, 0.2, 0.1)):
    g = RasterGrid.for_image(size, size)
    truth = VectorShape(disc(), np.array(color))
    return render_shapes([truth], np.ones(3), g), truth


@pytest.fixture(scope="module")
def disc_result():
    img, _ = disc_image()
    return img, vectorize(img, options=FAST, workers=1)


def test_render_shapes_back_to_front():
    g = RasterGrid(4)
    a = VectorShape(disc(r=0.4), np.array([1.0, 0.0, 0.0]))
    b = VectorShape(disc(r=0.2), np.array([0.0, 0.0, 1.0]))
    out = render_shapes([a, b], np.ones(3), g)
    np.testing.assert_allclose(out[8, 8], [0, 0, 1])
    out = render_shapes([b, a], np.ones(3), g)
    np.testing.assert_allclose(out[8, 8], [1, 0, 0])


def test_render_shapes_oracle_close_to_exact():
    g = RasterGrid(5)
    s = [VectorShape(rounded_rect((0.5, 0.5), (0.6, 0.4), 0.1), np.array([0.2, 0.5, 0.9]))]
    diff = render_shapes(s, np.ones(3), g, oracle=32) - render_shapes(s, np.ones(3), g)
    assert np.abs(diff).max() <= 0.05


def test_render_document_crops_non_dyadic():
    doc = VectorDocument(20, 12, [VectorShape(disc((10, 6), 5), np.array([0.0, 0.0, 0.0]))], np.ones(3))
    out = render_document(doc)
    assert out.shape == (12, 20, 3)
    # disc area in pixels, from the exact coverage
    assert np.sum(1 - out[..., 0]) == pytest.approx(np.sum(coverage(disc((10 / 32, 6 / 32), 5 / 32), RasterGrid(5))),
                                                    rel=1e-9)


def test_render_document_resizes():
    doc = VectorDocument(10, 10, [VectorShape(disc((5, 5), 3), np.array([0.0, 0.0, 0.0]))], np.ones(3))
    out = render_document(doc, size=40)
    assert out.shape == (40, 40, 3)
    np.testing.assert_allclose(out[20, 20], 0.0, atol=1e-12)


def test_vectorize_disc(disc_result):
    img, res = disc_result
    assert len(res.document.shapes) == 1
    assert res.psnr_after >= res.psnr_before
    assert res.psnr_after >= 30.0
    np.testing.assert_allclose(res.background, [1, 1, 1], atol=1e-6)
    out = render_document(res.document)
    assert psnr(out, img) == pytest.approx(res.psnr_after, abs=1e-6)


def test_vectorize_report_schema(disc_result):
    _, res = disc_result
    rep = res.report()
    for key in ("schema_version", "width", "height", "grid_depth", "psnr_before_db", "psnr_after_db",
                "fallback_to_initial", "background", "seconds", "shapes"):
        assert key in rep
    sh = rep["shapes"][0]
    assert np.asarray(sh["control_points_px"]).shape == (sh["segments"], 3, 2)
    totals = [t["total"] for t in sh["trace"]]
    assert all(b <= a for a, b in zip(totals, totals[1:]))


def test_vectorize_constant_image():
    res = vectorize(np.full((16, 16, 3), 0.25), options=FAST)
    assert res.document.shapes == []
    np.testing.assert_allclose(res.background, 0.25)
    assert res.psnr_after == 99.0


def test_vectorize_seed_ground_truth_stays_put():
    img, truth = disc_image()
    seed = VectorDocument(64, 64, [truth.replace(bezigon=truth.bezigon.transformed(64))], np.ones(3))
    res = vectorize(img, seed=seed, options=FAST)
    moved = np.abs(res.document.shapes[0].bezigon.ctrl - seed.shapes[0].bezigon.ctrl).max()
    assert moved <= 0.1


def test_vectorize_without_optimization_returns_initial():
    img, _ = disc_image(32)
    res = vectorize(img, optimize=False)
    assert res.psnr_after == res.psnr_before
    np.testing.assert_array_equal(res.document.shapes[0].bezigon.ctrl, res.initial.shapes[0].bezigon.ctrl)


def test_vectorize_grayscale():
    img, _ = disc_image(32)
    res = vectorize(img.mean(axis=2), options=FAST)
    assert len(res.document.shapes) == 1
    assert len(res.document.shapes[0].color) == 1


def test_vectorize_workers_deterministic():
    g = RasterGrid(5)
    shapes = [VectorShape(disc((0.3, 0.3), 0.2), np.array([0.9, 0.1, 0.1])),
              VectorShape(disc((0.7, 0.7), 0.2), np.array([0.1, 0.1, 0.9]))]
    img = render_shapes(shapes, np.ones(3), g)
    a = vectorize(img, options=FAST, workers=1)
    b = vectorize(img, options=FAST, workers=2)
    assert len(a.document.shapes) == 2
    for sa, sb in zip(a.document.shapes, b.document.shapes):
        np.testing.assert_array_equal(sa.bezigon.ctrl, sb.bezigon.ctrl)


def test_vectorize_depth_too_small():
    with pytest.raises(ValueError):
        vectorize(np.zeros((40, 40, 3)), depth=5)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("BEZITRACE_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("BEZITRACE_THREADS", "lots")
    with pytest.raises(ValueError):
        worker_count()


def test_oracle_coverage_helper_in_unit_range():
    a = oracle_coverage(disc(), RasterGrid(4), 4)
    assert a.min() >= 0 and a.max() <= 1
