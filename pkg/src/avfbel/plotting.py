"""Tiny SVG renderer for scatter, line and heatmap figures.

CSV files are the canonical outputs; these drawings are conveniences.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, MARGIN = 480, 360, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(values, dtype=np.float64) - lo) / span * (out_hi - out_lo)


def _frame(title, xlabel, ylabel, body, legend=()):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">'
        f'{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    parts += body
    for i, name in enumerate(legend):
        y = MARGIN + 14 + 16 * i
        parts.append(f'<rect x="{WIDTH - MARGIN - 110}" y="{y - 9}" width="10" height="10" '
                     f'fill="{PALETTE[i % len(PALETTE)]}"/>')
        parts.append(f'<text x="{WIDTH - MARGIN - 95}" y="{y}" font-size="11">{escape(name)}</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def _bounds(arrays):
    lo = min(float(np.min(a)) for a in arrays)
    hi = max(float(np.max(a)) for a in arrays)
    return lo, hi


def scatter(x, y, title="", xlabel="", ylabel="", limits=None, radius=2.0, diagonal=False) -> str:
    x, y = np.asarray(x, float), np.asarray(y, float)
    (x0, x1), (y0, y1) = limits or (_bounds([x]), _bounds([y]))
    px = _scale(x, x0, x1, MARGIN, WIDTH - MARGIN)
    py = _scale(y, y0, y1, HEIGHT - MARGIN, MARGIN)
    body = [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{radius}" fill="{PALETTE[0]}"/>'
            for a, b in zip(px, py)]
    if diagonal:
        body.insert(0, f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
                       f'y2="{MARGIN}" stroke="#999" stroke-dasharray="4"/>')
    return _frame(title, xlabel, ylabel, body)


def lines(series: dict, title="", xlabel="", ylabel="") -> str:
    """One polyline per named series, x = sample index."""
    arrays = [np.asarray(v, float) for v in series.values()]
    y0, y1 = _bounds(arrays)
    n = max(len(a) for a in arrays)
    body = []
    for i, a in enumerate(arrays):
        px = _scale(np.arange(len(a)), 0, max(n - 1, 1), MARGIN, WIDTH - MARGIN)
        py = _scale(a, y0, y1, HEIGHT - MARGIN, MARGIN)
        pts = " ".join(f"{p:.2f},{q:.2f}" for p, q in zip(px, py))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[i % len(PALETTE)]}"/>')
    return _frame(title, xlabel, ylabel, body, legend=list(series))


def heatmap(matrix, title="", xlabel="col", ylabel="row") -> str:
    """Diverging blue-white-red grid, symmetric around zero."""
    m = np.atleast_2d(np.asarray(matrix, float))
    rows, cols = m.shape
    vmax = float(np.max(np.abs(m))) or 1.0
    cw = (WIDTH - 2 * MARGIN) / cols
    ch = (HEIGHT - 2 * MARGIN) / rows
    body = []
    for (r, c), v in np.ndenumerate(m):
        t = v / vmax
        shade = int(round(255 * (1 - abs(t))))
        color = f"rgb(255,{shade},{shade})" if t >= 0 else f"rgb({shade},{shade},255)"
        body.append(f'<rect x="{MARGIN + c * cw:.2f}" y="{MARGIN + r * ch:.2f}" '
                    f'width="{cw:.2f}" height="{ch:.2f}" fill="{color}"/>')
    return _frame(title, xlabel, ylabel, body)
