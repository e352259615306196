"""CSV and dependency-free SVG writers for run artifacts."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
# viridis anchors for heatmaps
_CMAP = np.array(
    [
        [68, 1, 84],
        [59, 82, 139],
        [33, 145, 140],
        [94, 201, 98],
        [253, 231, 37],
    ],
    dtype=np.float64,
)


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write rows with '\\n' line ends and 17-significant-digit floats (exact round trip)."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc
    return path


def read_csv(path) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _nice_ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt_tick(t: float) -> str:
    return format(t, ".4g")


class _Frame:
    def __init__(self, xlim, ylim, width=640, height=400, margin=(60, 20, 40, 50)):
        self.w, self.h = width, height
        self.left, self.top, self.right, self.bottom = margin
        self.xlim, self.ylim = xlim, ylim

    def x(self, v):
        lo, hi = self.xlim
        return self.left + (v - lo) / (hi - lo) * (self.w - self.left - self.right)

    def y(self, v):
        lo, hi = self.ylim
        return self.h - self.bottom - (v - lo) / (hi - lo) * (self.h - self.top - self.bottom)

    def axes(self, title, xlabel, ylabel) -> List[str]:
        x0, x1 = self.left, self.w - self.right
        y0, y1 = self.h - self.bottom, self.top
        out = [
            f'<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>',
            f'<text x="{self.w / 2:.1f}" y="14" text-anchor="middle" font-size="13">{title}</text>',
            f'<text x="{self.w / 2:.1f}" y="{self.h - 6}" text-anchor="middle" font-size="12">{xlabel}</text>',
            f'<text x="14" y="{self.h / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 14 {self.h / 2:.1f})">{ylabel}</text>',
        ]
        for t in _nice_ticks(*self.xlim):
            px = self.x(t)
            out.append(f'<path d="M{px:.2f},{y0} L{px:.2f},{y0 + 4}" stroke="black"/>')
            out.append(f'<text x="{px:.2f}" y="{y0 + 16}" text-anchor="middle" font-size="10">{_fmt_tick(t)}</text>')
        for t in _nice_ticks(*self.ylim):
            py = self.y(t)
            out.append(f'<path d="M{x0 - 4},{py:.2f} L{x0},{py:.2f}" stroke="black"/>')
            out.append(f'<text x="{x0 - 6}" y="{py + 3:.2f}" text-anchor="end" font-size="10">{_fmt_tick(t)}</text>')
        return out


def _limits(values: np.ndarray, pad: float = 0.05):
    values = values[np.isfinite(values)]
    if values.size == 0:
        return 0.0, 1.0
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def _svg(width, height, body: List[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write SVG {path}: {exc}") from exc
    return path


def write_svg_lines(
    series: Sequence[dict],
    path,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> Path:
    """Line plot. Each series is a dict with ``x``, ``y``, ``label`` and optional ``band`` = (lo, hi)."""
    xs = np.concatenate([np.asarray(s["x"], float) for s in series]) if series else np.zeros(0)
    ys = [np.asarray(s["y"], float) for s in series]
    for s in series:
        if s.get("band") is not None:
            ys += [np.asarray(b, float) for b in s["band"]]
    ys = np.concatenate(ys) if ys else np.zeros(0)
    frame = _Frame(_limits(xs, 0.0), _limits(ys))
    body = frame.axes(title, xlabel, ylabel)
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        x, y = np.asarray(s["x"], float), np.asarray(s["y"], float)
        if s.get("band") is not None and len(x) >= 2:
            lo, hi = (np.asarray(b, float) for b in s["band"])
            pts = [(frame.x(a), frame.y(b)) for a, b in zip(x, hi)]
            pts += [(frame.x(a), frame.y(b)) for a, b in zip(x[::-1], lo[::-1])]
            body.append(
                '<polygon points="' + " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
                + f'" fill="{color}" fill-opacity="0.2" stroke="none"/>'
            )
        if len(x) >= 2:
            body.append(
                '<polyline points="' + " ".join(f"{frame.x(a):.2f},{frame.y(b):.2f}" for a, b in zip(x, y))
                + f'" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        elif len(x) == 1:
            body.append(f'<circle cx="{frame.x(x[0]):.2f}" cy="{frame.y(y[0]):.2f}" r="3" fill="{color}"/>')
        ly = frame.top + 14 * (k + 1)
        lx = frame.w - frame.right - 150
        body.append(f'<rect x="{lx}" y="{ly - 8}" width="12" height="8" fill="{color}"/>')
        body.append(f'<text x="{lx + 16}" y="{ly}" font-size="11">{s.get("label", "")}</text>')
    return _write_text(path, _svg(frame.w, frame.h, body))


def _colormap(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0) * (len(_CMAP) - 1)
    k = np.minimum(np.floor(t).astype(int), len(_CMAP) - 2)
    f = (t - k)[..., None]
    return np.rint(_CMAP[k] * (1 - f) + _CMAP[k + 1] * f).astype(int)


def write_svg_heatmap(
    grid: np.ndarray,
    path,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    extent=(0.0, 1.0, 0.0, 1.0),
    vlim: Optional[Tuple[float, float]] = None,
) -> Path:
    """Heatmap of grid[ix, iy] over ``extent`` = (x0, x1, y0, y1), with a colour-bar legend."""
    grid = np.asarray(grid, dtype=np.float64)
    vmin, vmax = vlim if vlim is not None else (float(np.nanmin(grid)), float(np.nanmax(grid)))
    span = vmax - vmin if vmax > vmin else 1.0
    frame = _Frame((extent[0], extent[1]), (extent[2], extent[3]), width=520, height=440, margin=(60, 90, 40, 50))
    body = frame.axes(title, xlabel, ylabel)
    nx, ny = grid.shape
    colors = _colormap((grid - vmin) / span)
    dx = (extent[1] - extent[0]) / nx
    dy = (extent[3] - extent[2]) / ny
    cw = frame.x(extent[0] + dx) - frame.x(extent[0])
    ch = frame.y(extent[2]) - frame.y(extent[2] + dy)
    for ix in range(nx):
        for iy in range(ny):
            r, g, b = colors[ix, iy]
            px = frame.x(extent[0] + ix * dx)
            py = frame.y(extent[2] + (iy + 1) * dy)
            body.append(
                f'<rect x="{px:.2f}" y="{py:.2f}" width="{cw + 0.3:.2f}" height="{ch + 0.3:.2f}" '
                f'fill="rgb({r},{g},{b})"/>'
            )
    # colour bar
    bx = frame.w - frame.right + 20
    steps = 32
    top, bottom = frame.top, frame.h - frame.bottom
    hstep = (bottom - top) / steps
    for k in range(steps):
        r, g, b = _colormap(np.array([(k + 0.5) / steps]))[0]
        body.append(
            f'<rect x="{bx}" y="{bottom - (k + 1) * hstep:.2f}" width="14" height="{hstep + 0.3:.2f}" '
            f'fill="rgb({r},{g},{b})"/>'
        )
    body.append(f'<text x="{bx + 18}" y="{top + 8}" font-size="10">{_fmt_tick(vmax)}</text>')
    body.append(f'<text x="{bx + 18}" y="{bottom}" font-size="10">{_fmt_tick(vmin)}</text>')
    return _write_text(path, _svg(frame.w, frame.h, body))
