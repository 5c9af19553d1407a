"""Static SVG line plots of trajectories."""
from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

WIDTH, HEIGHT = 760, 400
LEFT, RIGHT, TOP, BOTTOM = 64, 150, 24, 44


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    """Round tick positions covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    x = first
    while x <= hi + step * 1e-9:
        ticks.append(0.0 if abs(x) < step * 1e-9 else x)
        x += step
    return ticks


def _label(x: float) -> str:
    return format(x, ".4g")


def line_plot(times: np.ndarray, series: Mapping[str, np.ndarray], title: str = "",
              xlabel: str = "t") -> str:
    """One polyline per series, with axes, ticks and a legend."""
    times = np.asarray(times, dtype=float)
    finite = [np.asarray(v, dtype=float)[np.isfinite(v)] for v in series.values()]
    finite = [v for v in finite if v.size]
    y_lo = min((float(v.min()) for v in finite), default=0.0)
    y_hi = max((float(v.max()) for v in finite), default=1.0)
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    t_lo, t_hi = float(times[0]), float(times[-1]) if times[-1] > times[0] else float(times[0]) + 1

    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(t):
        return LEFT + (t - t_lo) / (t_hi - t_lo) * pw

    def sy(y):
        return TOP + (y_hi - y) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.2f}" y="16" text-anchor="middle" '
                   f'font-size="13">{escape(title)}</text>')
    # axes
    out.append(f'<g class="axes" stroke="black" stroke-width="1">'
               f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
               f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>')
    for t in nice_ticks(t_lo, t_hi):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 4}" stroke="black"/>'
                   f'<text x="{x:.2f}" y="{TOP + ph + 16}" text-anchor="middle">{_label(t)}</text>')
    for y in nice_ticks(y_lo, y_hi):
        yy = sy(y)
        out.append(f'<line x1="{LEFT - 4}" y1="{yy:.2f}" x2="{LEFT}" y2="{yy:.2f}" stroke="black"/>'
                   f'<line x1="{LEFT}" y1="{yy:.2f}" x2="{LEFT + pw}" y2="{yy:.2f}" stroke="#e5e5e5"/>'
                   f'<text x="{LEFT - 7}" y="{yy + 4:.2f}" text-anchor="end">{_label(y)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>')

    for k, (name, ys) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        ys = np.asarray(ys, dtype=float)
        # split at non-finite samples so a blow-up does not draw a spike
        runs, cur = [], []
        for t, y in zip(times, ys):
            if math.isfinite(y):
                cur.append(f"{sx(t):.2f},{sy(y):.2f}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for run in runs:
            out.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5" points="{" ".join(run)}"/>')
        ly = TOP + 12 + 18 * k
        lx = LEFT + pw + 14
        out.append(f'<g class="legend"><line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>'
                   f'<text x="{lx + 28}" y="{ly + 4}">{escape(name)}</text></g>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(path, times, series: Mapping[str, np.ndarray], title: str = "") -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(line_plot(times, series, title))


def select(values: Mapping[str, np.ndarray], names: Sequence[str]) -> dict[str, np.ndarray]:
    missing = [n for n in names if n not in values]
    if missing:
        raise KeyError(f"unknown series {missing}")
    return {n: values[n] for n in names}
