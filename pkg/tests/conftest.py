import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bezitrace.diagnostics import random_bezigon

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def dense_points(bz, per_segment=2000):
    """Dense polyline sampled uniformly in t, independent of ``flatten``."""
    t = np.linspace(0.0, 1.0, per_segment + 1)[:-1]
    b = np.stack([(1 - t) ** 3, 3 * (1 - t) ** 2 * t, 3 * (1 - t) * t ** 2, t ** 3], axis=1)
    pts = np.concatenate([b @ seg for seg in bz.segments])
    return np.vstack([pts, pts[:1]])


def brute_crossings(pts):
    """Proper crossings of a closed polyline by an O(E^2) loop over edge pairs."""
    out = []
    e = len(pts) - 1
    a, b = pts[:-1], pts[1:]
    for i in range(e):
        p, r = a[i], b[i] - a[i]
        q = a[i + 2:]
        s = b[i + 2:] - q
        if i == 0:
            q, s = q[:-1], s[:-1]
        den = r[0] * s[:, 1] - r[1] * s[:, 0]
        w = q - p
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[:, 0] * s[:, 1] - w[:, 1] * s[:, 0]) / den
            u = (w[:, 0] * r[1] - w[:, 1] * r[0]) / den
        hit = (den != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
        for k in np.nonzero(hit)[0]:
            out.append(p + t[k] * r)
    return np.array(out).reshape(-1, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_shape(rng):
    return random_bezigon(rng)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
