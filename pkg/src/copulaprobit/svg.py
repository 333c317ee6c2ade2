"""Minimal deterministic SVG charts (no plotting runtime needed)."""

from __future__ import annotations

import math
from html import escape

_W, _H = 640, 420
_M = {"left": 70, "right": 20, "top": 40, "bottom": 90}
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(step):
        out.append(round(v, 12))
        v += step
    return out


def _nice_range(values, include=()):
    vals = [v for v in values if v is not None and math.isfinite(v)] + list(include)
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def bar_chart(labels, values, title: str, ylabel: str, lower=None, upper=None,
              reference_lines=(), flagged=()) -> str:
    """Vertical bars with optional interval whiskers and dashed reference lines.

    Bars whose value is ``None`` are drawn as a grey "n/a" marker; labels in
    ``flagged`` are drawn in grey (e.g. non-converged fits).
    """
    lo_y, hi_y = _nice_range(list(values) + list(lower or []) + list(upper or []),
                             include=[0.0, *reference_lines])
    x0, x1 = _M["left"], _W - _M["right"]
    y0, y1 = _H - _M["bottom"], _M["top"]

    def sy(v):
        return y0 - (v - lo_y) / (hi_y - lo_y) * (y0 - y1)

    out = _header(title)
    for t in _ticks(lo_y, hi_y):
        out.append(f'<line x1="{x0}" x2="{x1}" y1="{_f(sy(t))}" y2="{_f(sy(t))}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{x0 - 6}" y="{_f(sy(t) + 4)}" text-anchor="end">{t:g}</text>')
    out.append(f'<line x1="{x0}" x2="{x1}" y1="{_f(sy(0.0))}" y2="{_f(sy(0.0))}" stroke="black"/>')
    n = max(len(labels), 1)
    slot = (x1 - x0) / n
    for i, (lab, v) in enumerate(zip(labels, values)):
        cx = x0 + slot * (i + 0.5)
        colour = "#9e9e9e" if lab in flagged else _PALETTE[0]
        if v is None or not math.isfinite(v):
            out.append(f'<text x="{_f(cx)}" y="{_f(sy(0.0) - 4)}" text-anchor="middle" fill="#9e9e9e">n/a</text>')
        else:
            top, bottom = sorted((sy(v), sy(0.0)))
            out.append(f'<rect x="{_f(cx - slot * 0.35)}" y="{_f(top)}" width="{_f(slot * 0.7)}" '
                       f'height="{_f(max(bottom - top, 0.5))}" fill="{colour}"/>')
        if lower is not None and upper is not None and lower[i] is not None and upper[i] is not None:
            out.append(f'<line x1="{_f(cx)}" x2="{_f(cx)}" y1="{_f(sy(lower[i]))}" y2="{_f(sy(upper[i]))}" '
                       'stroke="black"/>')
        out.append(f'<text transform="translate({_f(cx + 4)},{y0 + 8}) rotate(60)">{escape(str(lab))}</text>')
    for r in reference_lines:
        out.append(f'<line x1="{x0}" x2="{x1}" y1="{_f(sy(r))}" y2="{_f(sy(r))}" stroke="#d62728" '
                   'stroke-dasharray="6,4"/>')
    out.append(f'<text transform="translate(16,{(y0 + y1) / 2:.0f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(series: dict, title: str, xlabel: str, ylabel: str, step: bool = True) -> str:
    """Curves in the unit square, e.g. precision-recall curves.

    ``series`` maps a legend label to a list of ``(x, y)`` points.
    """
    x0, x1 = _M["left"], _W - _M["right"]
    y0, y1 = _H - _M["bottom"], _M["top"]

    def sx(v):
        return x0 + v * (x1 - x0)

    def sy(v):
        return y0 - v * (y0 - y1)

    out = _header(title)
    for t in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        out.append(f'<line x1="{x0}" x2="{x1}" y1="{_f(sy(t))}" y2="{_f(sy(t))}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{x0 - 6}" y="{_f(sy(t) + 4)}" text-anchor="end">{t:g}</text>')
        out.append(f'<text x="{_f(sx(t))}" y="{y0 + 16}" text-anchor="middle">{t:g}</text>')
    out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>')
    for k, (label, pts) in enumerate(series.items()):
        colour = _PALETTE[k % len(_PALETTE)]
        coords = []
        prev_x = 0.0
        for x, y in pts:
            if step:
                coords.append(f"{_f(sx(prev_x))},{_f(sy(y))}")
            coords.append(f"{_f(sx(x))},{_f(sy(y))}")
            prev_x = x
        out.append(f'<polyline points="{" ".join(coords)}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ly = y0 + 40 + 14 * k
        out.append(f'<line x1="{x0}" x2="{x0 + 20}" y1="{ly - 4}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{x0 + 26}" y="{ly}">{escape(label)}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{y0 + 30}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(16,{(y0 + y1) / 2:.0f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
