import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from nanobell.svg import contour_segments, heatmap_svg

NS = "{http://www.w3.org/2000/svg}"


def test_linear_field_gives_straight_contour():
    x = np.arange(5.0)
    z = np.tile(x, (4, 1))  # z[row, col] = col
    segs = contour_segments(z, 2.5)
    assert len(segs) == 3
    for (c0, _), (c1, _) in segs:
        assert c0 == pytest.approx(2.5) and c1 == pytest.approx(2.5)


def test_circle_contour_points_lie_near_radius():
    n = 41
    g = np.linspace(-2, 2, n)
    X, Y = np.meshgrid(g, g)
    segs = contour_segments(X**2 + Y**2, 1.0)
    assert segs
    h = g[1] - g[0]
    for seg in segs:
        for c, r in seg:
            rad = math.hypot(g[0] + c * h, g[0] + r * h)
            assert rad == pytest.approx(1.0, abs=h * h)


def test_no_crossing_and_nan_cells():
    assert contour_segments(np.zeros((3, 3)), 1.0) == []
    z = np.array([[0.0, 2.0], [0.0, np.nan]])
    assert contour_segments(z, 1.0) == []


def test_saddle_resolved_by_cell_mean():
    z = np.array([[2.0, 0.0], [0.0, 2.0]])
    segs = contour_segments(z, 0.9)  # mean 1.0 is above: the high corners connect
    assert len(segs) == 2
    # each segment cuts off one low corner, (1, 0) or (0, 1)
    cut = sorted(tuple(np.round(np.mean(s, axis=0))) for s in segs)
    assert cut == [(0.0, 1.0), (1.0, 0.0)]


def test_heatmap_is_well_formed_svg():
    x = np.linspace(0, 1, 6)
    y = np.linspace(0, 2, 4)
    z = np.add.outer(y, x)
    text = heatmap_svg(x, y, z, level=1.0, xlabel="a < b", title="t & u",
                       extra_contours={"CH": z})
    root = ET.fromstring(text)
    assert root.tag == NS + "svg"
    rects = root.findall(NS + "rect")
    assert len(rects) == 6 * 4 + 1
    lines = root.findall(NS + "line")
    dashed = [ln for ln in lines if ln.get("stroke-dasharray")]
    assert lines and len(dashed) == len(lines) // 2


def test_heatmap_handles_nan_and_constant():
    z = np.full((2, 3), np.nan)
    ET.fromstring(heatmap_svg([0, 1, 2], [0, 1], z))
    ET.fromstring(heatmap_svg([0, 1, 2], [0, 1], np.ones((2, 3))))
