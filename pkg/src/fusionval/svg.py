"""Minimal self-contained SVG 1.1 charts (no plotting library needed)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")

WIDTH, HEIGHT = 720, 480
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    style: str = "line"  # line | step | points


@dataclass
class Chart:
    title: str
    x_label: str
    y_label: str
    series: list[Series] = field(default_factory=list)
    annotations: list[str] = field(default_factory=list)
    y_range: tuple[float, float] | None = None


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw * (1 - 1e-12))
    start = step * (lo // step)
    ticks, v = [], start
    while v <= hi + 1e-9 * step:
        if v >= lo - 1e-9 * step:
            ticks.append(round(v, 10))
        v += step
    return ticks


def render(chart: Chart) -> str:
    xs = [float(v) for s in chart.series for v in s.x]
    ys = [float(v) for s in chart.series for v in s.y]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = chart.y_range if chart.y_range else ((min(0.0, min(ys)), max(ys)) if ys else (0.0, 1.0))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<title>{escape(chart.title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{escape(chart.title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for v in _nice_ticks(x0, x1):
        out.append(
            f'<text x="{px(v):.1f}" y="{TOP + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:g}</text>'
        )
    for v in _nice_ticks(y0, y1):
        out.append(f'<line x1="{LEFT - 4}" y1="{py(v):.1f}" x2="{LEFT + pw}" y2="{py(v):.1f}" stroke="#dddddd"/>')
        out.append(
            f'<text x="{LEFT - 8}" y="{py(v) + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="11">{v:g}</text>'
        )
    out.append(
        f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 18}" text-anchor="middle" font-family="sans-serif" font-size="13">{escape(chart.x_label)}</text>'
    )
    out.append(
        f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {TOP + ph / 2:.1f})">{escape(chart.y_label)}</text>'
    )
    for i, s in enumerate(chart.series):
        colour = PALETTE[i % len(PALETTE)]
        pts = list(zip((float(v) for v in s.x), (float(v) for v in s.y)))
        out.append(f'<g id="series-{i}">')
        if s.style == "points":
            out.extend(
                f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="1.5" fill="{colour}" fill-opacity="0.35"/>' for a, b in pts
            )
        elif pts:
            coords = []
            for j, (a, b) in enumerate(pts):
                if s.style == "step" and j > 0:
                    coords.append(f"{px(a):.1f},{py(pts[j - 1][1]):.1f}")
                coords.append(f"{px(a):.1f},{py(b):.1f}")
            out.append(f'<polyline points="{" ".join(coords)}" fill="none" stroke="{colour}" stroke-width="2"/>')
        out.append("</g>")
        out.append(
            f'<text x="{LEFT + pw - 10}" y="{TOP + 16 + 16 * i}" text-anchor="end" font-family="sans-serif" '
            f'font-size="12" fill="{colour}">{escape(s.label)}</text>'
        )
    for j, note in enumerate(chart.annotations):
        out.append(
            f'<text x="{LEFT + 10}" y="{TOP + 16 + 16 * j}" font-family="sans-serif" font-size="12">{escape(note)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
