"""Minimal standalone SVG for log-log scatter plots with a fitted line."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 360
MARGIN = 56


@dataclass
class Axes:
    xlabel: str = "N"
    ylabel: str = "criticality"
    base: int = 2
    title: str = ""


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def render_svg(points, means=None, fit=None, axes=None):
    """SVG text for replicate ``points`` ``[(x, y), ...]``, a mean polyline and a fit.

    ``fit`` is anything with ``slope`` and ``intercept`` in log-``base`` units
    (for example :class:`saapde.experiments.RateFit`).
    """
    axes = axes or Axes()
    pts = [(x, y) for x, y in points if x > 0 and y > 0]
    if not pts:
        raise ValueError("nothing to plot: the series has no positive points")
    means = sorted(means.items()) if isinstance(means, dict) else sorted(means or [])
    lg = lambda v: math.log(v, axes.base)  # noqa: E731
    xs = [lg(x) for x, _ in pts] + [lg(x) for x, _ in means]
    ys = [lg(y) for _, y in pts] + [lg(y) for _, y in means if y > 0]
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    x1, y1 = max(x1, x0 + 1), max(y1, y0 + 1)
    sx = lambda v: MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)  # noqa: E731
    sy = lambda v: HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)  # noqa: E731

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<g stroke="black" fill="none"><rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" height="{HEIGHT - 2 * MARGIN}"/></g>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{_fmt(sx(t))}" y="{HEIGHT - MARGIN + 16}" font-size="11" text-anchor="middle">{axes.base}^{t}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN - 6}" y="{_fmt(sy(t) + 4)}" font-size="11" text-anchor="end">{axes.base}^{t}</text>')
    out.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 12}" font-size="13" text-anchor="middle">{escape(axes.xlabel)}</text>')
    out.append(
        f'<text x="14" y="{HEIGHT / 2:.0f}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {HEIGHT / 2:.0f})">{escape(axes.ylabel)}</text>'
    )
    if axes.title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="24" font-size="14" text-anchor="middle">{escape(axes.title)}</text>')
    for x, y in pts:
        out.append(f'<circle cx="{_fmt(sx(lg(x)))}" cy="{_fmt(sy(lg(y)))}" r="2.5" fill="#4477aa" fill-opacity="0.5"/>')
    if means:
        path = " ".join(f"{_fmt(sx(lg(x)))},{_fmt(sy(lg(y)))}" for x, y in means if y > 0)
        out.append(f'<polyline points="{path}" stroke="#cc3311" stroke-width="2" fill="none"/>')
    if fit is not None:
        a, b = x0, x1
        ya, yb = fit.slope * a + fit.intercept, fit.slope * b + fit.intercept
        out.append(
            f'<line x1="{_fmt(sx(a))}" y1="{_fmt(sy(ya))}" x2="{_fmt(sx(b))}" y2="{_fmt(sy(yb))}" '
            f'stroke="black" stroke-dasharray="6 4"/>'
        )
        out.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 16}" font-size="12" text-anchor="end">slope {fit.slope:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg_plot(points, path, means=None, fit=None, axes=None):
    text = render_svg(points, means, fit, axes)
    with open(path, "w") as fh:
        fh.write(text)
    return path
