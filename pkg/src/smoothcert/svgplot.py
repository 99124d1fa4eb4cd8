"""Minimal deterministic SVG line plots (no timestamps, fixed layout)."""

from __future__ import annotations

from typing import Sequence

__all__ = ["curve_svg"]

_WIDTH = 640
_HEIGHT = 420
_MARGIN_L = 64
_MARGIN_R = 16
_MARGIN_T = 36
_MARGIN_B = 48
_TICKS = 5


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _scale(value: float, lo: float, hi: float, out_lo: float, out_hi: float) -> float:
    span = hi - lo
    frac = 0.0 if span == 0.0 else (value - lo) / span
    return out_lo + frac * (out_hi - out_lo)


def curve_svg(title: str, x_label: str, y_label: str,
              series: Sequence[tuple[str, str, Sequence[tuple[float, float]]]]) -> str:
    """Render labeled polylines; series entries are (label, color, points)."""
    xs = [p[0] for _, _, pts in series for p in pts]
    ys = [p[1] for _, _, pts in series for p in pts]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = 0.0, max(1.0, max(ys) if ys else 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    px_lo, px_hi = _MARGIN_L, _WIDTH - _MARGIN_R
    py_lo, py_hi = _HEIGHT - _MARGIN_B, _MARGIN_T

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH // 2}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    # axes
    parts.append(
        f'<line x1="{px_lo}" y1="{py_lo}" x2="{px_hi}" y2="{py_lo}" '
        f'stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{px_lo}" y1="{py_lo}" x2="{px_lo}" y2="{py_hi}" '
        f'stroke="black" stroke-width="1"/>'
    )
    for i in range(_TICKS + 1):
        fx = x_lo + (x_hi - x_lo) * i / _TICKS
        px = _scale(fx, x_lo, x_hi, px_lo, px_hi)
        parts.append(
            f'<line x1="{px:.2f}" y1="{py_lo}" x2="{px:.2f}" y2="{py_lo + 5}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{py_lo + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(fx)}</text>'
        )
        fy = y_lo + (y_hi - y_lo) * i / _TICKS
        py = _scale(fy, y_lo, y_hi, py_lo, py_hi)
        parts.append(
            f'<line x1="{px_lo - 5}" y1="{py:.2f}" x2="{px_lo}" y2="{py:.2f}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{px_lo - 9}" y="{py + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(fy)}</text>'
        )
    parts.append(
        f'<text x="{(px_lo + px_hi) // 2}" y="{_HEIGHT - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{(py_lo + py_hi) // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(py_lo + py_hi) // 2})">{y_label}</text>'
    )
    for idx, (label, color, pts) in enumerate(series):
        coords = " ".join(
            f"{_scale(x, x_lo, x_hi, px_lo, px_hi):.2f},"
            f"{_scale(y, y_lo, y_hi, py_lo, py_hi):.2f}"
            for x, y in pts
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{coords}"/>'
        )
        ly = _MARGIN_T + 14 + 16 * idx
        parts.append(
            f'<line x1="{px_hi - 150}" y1="{ly - 4}" x2="{px_hi - 126}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{px_hi - 120}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
