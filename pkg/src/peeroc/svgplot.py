"""Minimal log-log line charts written directly as SVG."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
MARKERS = ("circle", "square", "diamond", "triangle")


def _ticks(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def error_plot(series: dict[str, list[tuple[int, float]]], title: str,
               width: int = 520, height: int = 400) -> str:
    """Errors over ``N+1``: x axis ``log2(N+1)``, y axis ``log10(error)``.

    Non-finite or non-positive errors break the polyline of their series.
    """
    pts = {name: [(math.log2(n), math.log10(e) if e > 0 and math.isfinite(e) else None)
                  for n, e in rows] for name, rows in series.items()}
    xs = [x for rows in pts.values() for x, _ in rows]
    ys = [y for rows in pts.values() for _, y in rows if y is not None]
    if not xs:
        xs = [0.0, 1.0]
    if not ys:
        ys = [0.0, 1.0]
    xlo, xhi = math.floor(min(xs)), math.ceil(max(xs))
    ylo, yhi = math.floor(min(ys)), math.ceil(max(ys))
    xhi = max(xhi, xlo + 1)
    yhi = max(yhi, ylo + 1)
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def X(x):
        return left + (x - xlo) / (xhi - xlo) * pw

    def Y(y):
        return top + (yhi - y) / (yhi - ylo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(xlo, xhi):
        out.append(f'<line x1="{X(t):.1f}" y1="{top + ph}" x2="{X(t):.1f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X(t):.1f}" y="{top + ph + 18}" text-anchor="middle">{2 ** t}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<line x1="{left - 5}" y1="{Y(t):.1f}" x2="{left}" y2="{Y(t):.1f}" stroke="black"/>')
        out.append(f'<line x1="{left}" y1="{Y(t):.1f}" x2="{left + pw}" y2="{Y(t):.1f}" '
                   'stroke="#dddddd" stroke-width="0.5"/>')
        out.append(f'<text x="{left - 8}" y="{Y(t) + 4:.1f}" text-anchor="end">1e{t}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">N+1 (log2 scale)</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.1f})">error (log10 scale)</text>')

    for k, (name, rows) in enumerate(pts.items()):
        color = PALETTE[k % len(PALETTE)]
        segment: list[str] = []
        segments = []
        for x, y in rows:
            if y is None:
                if segment:
                    segments.append(segment)
                segment = []
                continue
            segment.append(f"{X(x):.1f},{Y(y):.1f}")
        if segment:
            segments.append(segment)
        for seg in segments:
            out.append(f'<polyline points="{" ".join(seg)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for p in seg:
                cx, cy = p.split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>')
        ly = top + 14 + 18 * k
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
