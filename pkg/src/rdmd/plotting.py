"""Dependency-free SVG heatmaps and scatter plots.

Output is byte-reproducible: every coordinate and colour is formatted with a
fixed number of digits, and the colour ramp is a fixed 256-entry table.
"""
from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 800, 600
PLOT_BOX = (70, 40, 640, 500)  # x0, y0, width, height of the data area

# anchor colours of the ramp (dark blue -> teal -> yellow)
_ANCHORS = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=float)
CATEGORICAL = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _build_ramp(n: int = 256) -> tuple[str, ...]:
    pos = np.linspace(0, len(_ANCHORS) - 1, n)
    lo = np.floor(pos).astype(int).clip(0, len(_ANCHORS) - 2)
    frac = (pos - lo)[:, None]
    rgb = np.rint(_ANCHORS[lo] * (1 - frac) + _ANCHORS[lo + 1] * frac).astype(int)
    return tuple(f"#{r:02x}{g:02x}{b:02x}" for r, g, b in rgb)


RAMP = _build_ramp()


def ramp_index(values: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    if vmax <= vmin:
        return np.zeros(np.shape(values), dtype=int)
    t = (np.asarray(values, dtype=float) - vmin) / (vmax - vmin)
    return np.clip(np.floor(t * 255.0 + 0.5), 0, 255).astype(int)


def _f(x: float) -> str:
    return f"{x:.2f}"


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{_escape(title)}</text>',
    ]


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _axes(lines: list[str], xr, yr, xlabel: str, ylabel: str) -> None:
    x0, y0, w, h = PLOT_BOX
    lines.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#000000"/>')
    for i in range(5):
        fx = x0 + w * i / 4
        fy = y0 + h - h * i / 4
        vx = xr[0] + (xr[1] - xr[0]) * i / 4
        vy = yr[0] + (yr[1] - yr[0]) * i / 4
        lines.append(f'<text x="{_f(fx)}" y="{y0 + h + 18}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{vx:.3g}</text>')
        lines.append(f'<text x="{x0 - 6}" y="{_f(fy + 4)}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{vy:.3g}</text>')
    lines.append(f'<text x="{x0 + w // 2}" y="{y0 + h + 40}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">{_escape(xlabel)}</text>')
    lines.append(f'<text x="16" y="{y0 + h // 2}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13" transform="rotate(-90 16 {y0 + h // 2})">{_escape(ylabel)}</text>')


def _colorbar(lines: list[str], vmin: float, vmax: float, label: str) -> None:
    x0, y0, w, h = PLOT_BOX
    bx = x0 + w + 20
    step = h / 256
    for k in range(256):
        y = y0 + h - (k + 1) * step
        lines.append(f'<rect x="{bx}" y="{_f(y)}" width="18" height="{_f(step + 0.05)}" fill="{RAMP[k]}"/>')
    lines.append(f'<text x="{bx + 22}" y="{y0 + h}" font-family="sans-serif" font-size="11">{vmin:.3g}</text>')
    lines.append(f'<text x="{bx + 22}" y="{y0 + 10}" font-family="sans-serif" font-size="11">{vmax:.3g}</text>')
    lines.append(f'<text x="{bx}" y="{y0 - 8}" font-family="sans-serif" font-size="11">{_escape(label)}</text>')


def _log10(values) -> np.ndarray:
    return np.log10(np.maximum(np.asarray(values, dtype=float), 1e-300))


def heatmap_svg(values: np.ndarray, re_range, im_range, title: str = "",
                label: str = "log10 1/||R(z)||") -> str:
    """Heatmap of ``log10(values)`` on a row-major ``(ny, nx)`` grid (row 0 = lowest imaginary part)."""
    v = _log10(values)
    if v.ndim != 2:
        raise ValueError("heatmap values must be a 2-D array")
    ny, nx = v.shape
    vmin, vmax = float(v.min()), float(v.max())
    idx = ramp_index(v, vmin, vmax)
    x0, y0, w, h = PLOT_BOX
    cw, ch = w / nx, h / ny
    lines = _header(title)
    for r in range(ny):
        y = y0 + h - (r + 1) * ch
        for c in range(nx):
            lines.append(f'<rect x="{_f(x0 + c * cw)}" y="{_f(y)}" width="{_f(cw + 0.05)}" '
                         f'height="{_f(ch + 0.05)}" fill="{RAMP[idx[r, c]]}"/>')
    _axes(lines, re_range, im_range, "Re z", "Im z")
    _colorbar(lines, vmin, vmax, label)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def scatter_svg(x, y, values=None, labels=None, title: str = "", xlabel: str = "x", ylabel: str = "y",
                label: str = "log10 value", radius: float = 3.0) -> str:
    """Scatter plot coloured by ``log10(values)`` on the ramp, or by integer ``labels``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xr = (float(x.min()), float(x.max()))
    yr = (float(y.min()), float(y.max()))
    if xr[1] == xr[0]:
        xr = (xr[0] - 1, xr[1] + 1)
    if yr[1] == yr[0]:
        yr = (yr[0] - 1, yr[1] + 1)
    x0, y0, w, h = PLOT_BOX
    px = x0 + (x - xr[0]) / (xr[1] - xr[0]) * w
    py = y0 + h - (y - yr[0]) / (yr[1] - yr[0]) * h
    lines = _header(title)
    if values is not None:
        v = _log10(values)
        vmin, vmax = float(v.min()), float(v.max())
        colors = [RAMP[i] for i in ramp_index(v, vmin, vmax)]
    elif labels is not None:
        colors = [CATEGORICAL[int(k) % len(CATEGORICAL)] for k in labels]
    else:
        colors = ["#000000"] * x.size
    for a, b, col in zip(px, py, colors):
        lines.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{_f(radius)}" fill="{col}"/>')
    _axes(lines, xr, yr, xlabel, ylabel)
    if values is not None:
        _colorbar(lines, vmin, vmax, label)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
