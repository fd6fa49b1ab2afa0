"""Minimal SVG charts: stacked loss areas and efficiency curves.

Output is plain text with fixed number formatting, so identical data gives
identical files.
"""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1")

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 64, 150, 36, 48


def _n(x: float) -> str:
    return f"{x:.2f}"


class _Frame:
    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        self.x_lo, self.x_hi = x_lo, x_hi if x_hi > x_lo else x_lo + 1
        self.y_lo, self.y_hi = y_lo, y_hi if y_hi > y_lo else y_lo + 1

    def x(self, v):
        return _ML + (v - self.x_lo) / (self.x_hi - self.x_lo) * (_W - _ML - _MR)

    def y(self, v):
        return _H - _MB - (v - self.y_lo) / (self.y_hi - self.y_lo) * (_H - _MT - _MB)


def _axes(fr: _Frame, title: str, x_label: str, y_label: str, ticks: int = 5) -> list[str]:
    out = [
        f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 10}" text-anchor="middle" font-size="12">{escape(x_label)}</text>',
        f'<text x="14" y="{_H / 2:.0f}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {_H / 2:.0f})">{escape(y_label)}</text>',
    ]
    for k in range(ticks + 1):
        xv = fr.x_lo + (fr.x_hi - fr.x_lo) * k / ticks
        yv = fr.y_lo + (fr.y_hi - fr.y_lo) * k / ticks
        out.append(f'<text x="{_n(fr.x(xv))}" y="{_H - _MB + 16}" text-anchor="middle" font-size="10">{xv:.3g}</text>')
        out.append(f'<text x="{_ML - 6}" y="{_n(fr.y(yv) + 3)}" text-anchor="end" font-size="10">{yv:.3g}</text>')
    return out


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    for k, name in enumerate(names):
        y = _MT + 18 * k
        out.append(f'<rect x="{_W - _MR + 12}" y="{y}" width="12" height="12" fill="{PALETTE[k % len(PALETTE)]}"/>')
        out.append(f'<text x="{_W - _MR + 30}" y="{y + 10}" font-size="11">{escape(name)}</text>')
    return out


def _wrap(body: list[str]) -> str:
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def stacked_area(
    x: Sequence[float],
    layers: Mapping[str, Sequence[float]],
    *,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> str:
    """Layers are stacked bottom-up in mapping order."""
    xs = list(x)
    if not xs:
        raise ValueError("stacked_area needs at least one x value")
    for name, ys in layers.items():
        if len(ys) != len(xs):
            raise ValueError(f"layer {name!r} has {len(ys)} points, expected {len(xs)}")
    base = [0.0] * len(xs)
    tops = []
    for ys in layers.values():
        top = [b + float(v) for b, v in zip(base, ys)]
        tops.append((list(base), top))
        base = top
    fr = _Frame(min(xs), max(xs), 0.0, max(base) * 1.05 if max(base) > 0 else 1.0)
    body = _axes(fr, title, x_label, y_label)
    for k, (lo, hi) in enumerate(tops):
        pts = [f"{_n(fr.x(a))},{_n(fr.y(b))}" for a, b in zip(xs, hi)]
        pts += [f"{_n(fr.x(a))},{_n(fr.y(b))}" for a, b in zip(reversed(xs), reversed(lo))]
        body.append(f'<polygon points="{" ".join(pts)}" fill="{PALETTE[k % len(PALETTE)]}" fill-opacity="0.85" stroke="none"/>')
    body += _legend(list(layers))
    return _wrap(body)


def line_chart(
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    *,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    y_range: tuple[float, float] | None = None,
) -> str:
    all_x = [v for xs, _ in series.values() for v in xs]
    all_y = [v for _, ys in series.values() for v in ys]
    if not all_x:
        raise ValueError("line_chart needs data")
    lo, hi = y_range or (min(all_y), max(all_y))
    fr = _Frame(min(all_x), max(all_x), lo, hi)
    body = _axes(fr, title, x_label, y_label)
    for k, (name, (xs, ys)) in enumerate(series.items()):
        pts = " ".join(f"{_n(fr.x(a))},{_n(fr.y(b))}" for a, b in zip(xs, ys))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[k % len(PALETTE)]}" stroke-width="2"/>')
    body += _legend(list(series))
    return _wrap(body)
