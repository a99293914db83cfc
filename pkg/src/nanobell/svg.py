"""Standalone SVG heatmaps with level-set contours (no plotting dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np


def contour_segments(z: np.ndarray, level: float) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Marching-squares segments of ``z == level`` in fractional (col, row) index coordinates.

    Cells touching a NaN are skipped. Saddle cells are split using the cell mean.
    """
    z = np.asarray(z, dtype=float)
    segs = []
    ny, nx = z.shape

    def cross(p, q, zp, zq):
        t = (level - zp) / (zq - zp)
        return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))

    for i in range(ny - 1):
        for j in range(nx - 1):
            corners = [(j, i), (j + 1, i), (j + 1, i + 1), (j, i + 1)]
            vals = [z[i, j], z[i, j + 1], z[i + 1, j + 1], z[i + 1, j]]
            if any(math.isnan(v) for v in vals):
                continue
            above = [v > level for v in vals]
            if all(above) or not any(above):
                continue
            pts = []
            for k in range(4):
                a, b = k, (k + 1) % 4
                if above[a] != above[b]:
                    pts.append(cross(corners[a], corners[b], vals[a], vals[b]))
            if len(pts) == 2:
                segs.append((pts[0], pts[1]))
            else:
                # saddle: edges 0-1, 1-2, 2-3, 3-0 give pts in that order
                centre_above = np.mean(vals) > level
                if centre_above == above[0]:
                    segs += [(pts[0], pts[1]), (pts[2], pts[3])]
                else:
                    segs += [(pts[3], pts[0]), (pts[1], pts[2])]
    return segs


def _colour(v: float, lo: float, hi: float, centre: float) -> str:
    """Diverging blue-white-red map with white at ``centre``."""
    if math.isnan(v):
        return "#bbbbbb"
    if v >= centre:
        t = 0.0 if hi <= centre else min(1.0, (v - centre) / (hi - centre))
        r, g, b = 255, int(255 * (1 - t)), int(255 * (1 - t))
    else:
        t = 0.0 if lo >= centre else min(1.0, (centre - v) / (centre - lo))
        r, g, b = int(255 * (1 - t)), int(255 * (1 - t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(x, y, z, *, level: float = 1.0, xlabel: str = "", ylabel: str = "",
                title: str = "", extra_contours: dict | None = None,
                width: int = 480, height: int = 360) -> str:
    """Heatmap of ``z[len(y), len(x)]`` with the ``level`` contour in black.

    ``extra_contours`` maps a legend label to another array drawn dashed at the
    same level.
    """
    x, y, z = np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    nx, ny = len(x), len(y)
    cw, ch = pw / nx, ph / ny
    finite = z[np.isfinite(z)]
    lo, hi = (finite.min(), finite.max()) if finite.size else (level, level)

    def to_px(c, r):
        # index coordinates refer to cell centres
        return ml + (c + 0.5) * cw, mt + ph - (r + 0.5) * ch

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">']
    out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    for i in range(ny):
        for j in range(nx):
            px, py = ml + j * cw, mt + ph - (i + 1) * ch
            out.append(f'<rect x="{px:.2f}" y="{py:.2f}" width="{cw + 0.05:.2f}" '
                       f'height="{ch + 0.05:.2f}" fill="{_colour(z[i, j], lo, hi, level)}"/>')
    layers = [("", z, "")] + [(k, np.asarray(v, float), ' stroke-dasharray="4 3"')
                              for k, v in (extra_contours or {}).items()]
    for _, arr, dash in layers:
        for (c0, r0), (c1, r1) in contour_segments(arr, level):
            x0, y0 = to_px(c0, r0)
            x1, y1 = to_px(c1, r1)
            out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                       f'stroke="black" stroke-width="1.5"{dash}/>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        xv = x[0] + frac * (x[-1] - x[0])
        yv = y[0] + frac * (y[-1] - y[0])
        out.append(f'<text x="{ml + frac * pw:.1f}" y="{mt + ph + 14}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{ml - 5}" y="{mt + ph - frac * ph + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    legend = f"contour: {level:g}" + "".join(f"; dashed: {escape(k)}" for k in (extra_contours or {}))
    out.append(f'<text x="{width - mr}" y="{mt - 6}" text-anchor="end" font-size="9">{legend}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
