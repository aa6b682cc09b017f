"""Minimal self-contained SVG line plots (no plotting dependency).

Polyline plots with a framed axes box, linear ticks, and a text legend.
Output is deterministic: coordinates are formatted with a fixed precision.
"""

from __future__ import annotations

import numpy as np

__all__ = ["line_plot"]

_PALETTE = ("#1f6fb2", "#c44e52", "#55a868", "#8172b2", "#ccb974", "#64b5cd")

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 44  # margins around the axes box


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min(s for s in (1.0, 2.0, 2.5, 5.0, 10.0) if s * mag >= raw) * mag
    first = np.ceil(lo / step) * step
    return np.arange(first, hi + 0.5 * step, step)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def line_plot(curves: list[tuple[np.ndarray, np.ndarray, str]],
              title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """Render curves [(x, y, label), ...] as an SVG document string."""
    xs = np.concatenate([np.asarray(c[0], dtype=float) for c in curves])
    ys = np.concatenate([np.asarray(c[1], dtype=float) for c in curves])
    finite = np.isfinite(xs) & np.isfinite(ys)
    if not np.any(finite):
        raise ValueError("nothing finite to plot")
    x0, x1 = float(xs[finite].min()), float(xs[finite].max())
    y0, y1 = float(ys[finite].min()), float(ys[finite].max())
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x0 + 0.5
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y0 + 0.5
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    bw = _W - _ML - _MR
    bh = _H - _MT - _MB

    def px(x):
        return _ML + bw * (x - x0) / (x1 - x0)

    def py(y):
        return _MT + bh * (y1 - y) / (y1 - y0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{bw}" height="{bh}" fill="none" '
        f'stroke="#444" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_W // 2}" y="18" font-family="sans-serif" font-size="14" '
            f'text-anchor="middle">{title}</text>'
        )
    for t in _ticks(x0, x1):
        x = px(t)
        parts.append(
            f'<line x1="{x:.2f}" y1="{_MT + bh}" x2="{x:.2f}" y2="{_MT + bh + 5}" '
            f'stroke="#444"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{_MT + bh + 18}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{_fmt(t)}</text>'
        )
    for t in _ticks(y0, y1):
        y = py(t)
        parts.append(
            f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" '
            f'stroke="#444"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{y + 4:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{_fmt(t)}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{_ML + bw // 2}" y="{_H - 8}" font-family="sans-serif" '
            f'font-size="12" text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="14" y="{_MT + bh // 2}" font-family="sans-serif" '
            f'font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 14 {_MT + bh // 2})">{ylabel}</text>'
        )

    for i, (cx, cy, label) in enumerate(curves):
        cx = np.asarray(cx, dtype=float)
        cy = np.asarray(cy, dtype=float)
        ok = np.isfinite(cx) & np.isfinite(cy)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(cx[ok], cy[ok]))
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        if label:
            ly = _MT + 16 + 16 * i
            parts.append(
                f'<line x1="{_ML + bw - 120}" y1="{ly - 4}" x2="{_ML + bw - 96}" '
                f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
            )
            parts.append(
                f'<text x="{_ML + bw - 90}" y="{ly}" font-family="sans-serif" '
                f'font-size="11">{label}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
