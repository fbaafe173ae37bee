"""Minimal standalone SVG figures: line plots and heatmaps with contours."""

from __future__ import annotations

import math
from html import escape

import numpy as np

W, H = 640, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _doc(body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>',
                      f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
                      *body, "</svg>", ""])


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 8)
        return [float(k) for k in range(a, b + 1, step) if lo - 1e-9 <= k <= hi + 1e-9]
    if hi == lo:
        return [lo]
    raw = (hi - lo) / 6
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v: float, log: bool) -> str:
    return f"1e{int(v)}" if log else f"{v:g}"


def line_plot(series: dict[str, tuple], title: str = "", xlabel: str = "", ylabel: str = "",
              logy: bool = False, markers: bool = True) -> str:
    """Lines for ``{label: (x, y)}``; nonpositive or infinite values are
    dropped on a log axis."""
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    cleaned = {}
    for label, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y) & ((y > 0) if logy else True)
        cleaned[label] = (x[ok], np.log10(y[ok]) if logy else y[ok])
    xs = np.concatenate([v[0] for v in cleaned.values()] or [np.zeros(1)])
    ys = np.concatenate([v[1] for v in cleaned.values()] or [np.zeros(1)])
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    if logy:
        y0, y1 = math.floor(y0), math.ceil(y1)

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    body = [f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1, False):
        body.append(f'<line x1="{px(t):.1f}" y1="{TOP + ph}" x2="{px(t):.1f}" y2="{TOP + ph + 5}" stroke="black"/>')
        body.append(f'<text x="{px(t):.1f}" y="{TOP + ph + 18}" text-anchor="middle">{_fmt(t, False)}</text>')
    for t in _ticks(y0, y1, logy):
        body.append(f'<line x1="{LEFT - 5}" y1="{py(t):.1f}" x2="{LEFT}" y2="{py(t):.1f}" stroke="black"/>')
        body.append(f'<line x1="{LEFT}" y1="{py(t):.1f}" x2="{LEFT + pw}" y2="{py(t):.1f}" stroke="#ddd"/>')
        body.append(f'<text x="{LEFT - 8}" y="{py(t) + 4:.1f}" text-anchor="end">{_fmt(t, logy)}</text>')
    body.append(f'<text x="{LEFT + pw / 2}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    body.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" '
                f'transform="rotate(-90 16 {TOP + ph / 2})">{escape(ylabel)}</text>')
    for k, (label, (x, y)) in enumerate(cleaned.items()):
        color = PALETTE[k % len(PALETTE)]
        if x.size:
            pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, y))
            body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>')
            if markers:
                body.extend(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="2.5" fill="{color}"/>'
                            for a, b in zip(x, y))
        ly = TOP + 14 + 18 * k
        body.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" '
                    f'stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{LEFT + pw + 38}" y="{ly + 4}">{escape(label)}</text>')
    return _doc(body, title)


def _color(k: float, kmax: float) -> str:
    if not math.isfinite(k) or k >= 1.0:
        return "#f0f0f0"
    t = min(max(k / kmax, 0.0), 1.0) if kmax > 0 else 0.0
    # dark blue -> yellow
    r = int(30 + t * 220)
    g = int(40 + t * 190)
    b = int(120 - t * 90)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(re: np.ndarray, im: np.ndarray, K: np.ndarray, contours: dict[str, list] | None = None,
            title: str = "", kmax: float = 1.0) -> str:
    """Cells with ``K < 1`` coloured by value, others light grey; each
    contour is a list of segments drawn as a polyline set."""
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    x0 = re[0] - (re[1] - re[0]) / 2
    x1 = re[-1] + (re[1] - re[0]) / 2
    y0 = im[0] - (im[1] - im[0]) / 2
    y1 = im[-1] + (im[1] - im[0]) / 2
    cw, chh = pw / len(re), ph / len(im)

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    body = []
    for a in range(len(im)):
        for b in range(len(re)):
            body.append(f'<rect x="{LEFT + b * cw:.2f}" y="{TOP + ph - (a + 1) * chh:.2f}" '
                        f'width="{cw + 0.3:.2f}" height="{chh + 0.3:.2f}" fill="{_color(K[a, b], kmax)}"/>')
    styles = ("", "6,4", "2,3")
    for k, (label, segs) in enumerate((contours or {}).items()):
        dash = styles[k % len(styles)]
        attr = f' stroke-dasharray="{dash}"' if dash else ""
        for (xa, ya), (xb, yb) in segs:
            body.append(f'<line x1="{px(xa):.1f}" y1="{py(ya):.1f}" x2="{px(xb):.1f}" y2="{py(yb):.1f}" '
                        f'stroke="black" stroke-width="1.4"{attr}/>')
        ly = TOP + 14 + 18 * k
        body.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" '
                    f'stroke="black" stroke-width="1.4"{attr}/>')
        body.append(f'<text x="{LEFT + pw + 38}" y="{ly + 4}">{escape(label)}</text>')
    body.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _ticks(x0, x1, False):
        body.append(f'<text x="{px(t):.1f}" y="{TOP + ph + 18}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1, False):
        body.append(f'<text x="{LEFT - 8}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    body.append(f'<text x="{LEFT + pw / 2}" y="{H - 10}" text-anchor="middle">Re z</text>')
    body.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" '
                f'transform="rotate(-90 16 {TOP + ph / 2})">Im z</text>')
    return _doc(body, title)
