"""Dependency-free SVG line plots of harness results (log-scale y axis)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence
from xml.sax.saxutils import escape

from .bench import ResultRow

WIDTH, HEIGHT = 760, 460
LEFT, TOP, PLOT_W, PLOT_H = 80, 40, 480, 360
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
DASHES = {"classic": "", "linesearch": "6,3", "twodim": "2,2", "direct": "8,2,2,2"}
METRICS = {"residual_norm": "residual norm ||Ax - b||", "solution_norm": "solution norm ||x||",
           "iterations": "iterations"}
X_FIELDS = {"n": "n", "cond": "condition number"}


class EmptySelectionError(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    metric: str = "residual_norm"
    x: str = "n"
    x_log: bool = False
    aggregate: str = "mean"
    family: Optional[str] = None
    methods: Optional[tuple] = None
    policies: Optional[tuple] = None
    title: str = ""

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.x not in X_FIELDS:
            raise ValueError(f"unknown x field {self.x!r}")

    def describe(self) -> str:
        return (f"aggregate={self.aggregate} family={self.family} "
                f"methods={self.methods} policies={self.policies}")


def select(rows: Sequence[ResultRow], spec: PlotSpec) -> list[ResultRow]:
    out = [r for r in rows
           if r.seed == spec.aggregate
           and (spec.family is None or r.family == spec.family)
           and (spec.methods is None or r.method in spec.methods)
           and (spec.policies is None or r.policy in spec.policies)]
    if not out:
        raise EmptySelectionError(f"no rows match the plot filter ({spec.describe()})")
    return out


def _series(rows: Sequence[ResultRow], spec: PlotSpec) -> dict:
    series: dict = {}
    for r in rows:
        series.setdefault((r.method, r.policy), []).append(
            (float(getattr(r, spec.x)), float(getattr(r, spec.metric))))
    for pts in series.values():
        pts.sort(key=lambda p: p[0])
    return series


def _decades(values) -> tuple[int, int]:
    finite = [v for v in values if math.isfinite(v) and v > 0]
    if not finite:
        return 0, 1
    lo = math.floor(math.log10(min(finite)))
    hi = math.ceil(math.log10(max(finite)))
    if hi == lo:
        hi += 1
    return lo, hi


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def emit_plot(rows: Sequence[ResultRow], spec: PlotSpec = PlotSpec()) -> str:
    """Render the selected rows as an SVG document.

    Non-finite values are drawn at the top edge with an upward triangle;
    zero or negative values at the bottom edge with a downward one.
    """
    chosen = select(rows, spec)
    series = _series(chosen, spec)
    if any(not math.isfinite(x) for pts in series.values() for x, _ in pts):
        raise ValueError(f"x field {spec.x!r} is not finite for every selected row")
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    ylo, yhi = _decades(ys)

    def xt(v):
        return math.log10(v) if spec.x_log else v

    if spec.x_log and min(xs) <= 0:
        raise ValueError("log-scale x axis needs positive values")
    xmin, xmax = xt(min(xs)), xt(max(xs))
    if xmax == xmin:
        xmin, xmax = xmin - 1.0, xmax + 1.0

    def px(v):
        return LEFT + PLOT_W * (xt(v) - xmin) / (xmax - xmin)

    def py(v):
        return TOP + PLOT_H * (yhi - math.log10(v)) / (yhi - ylo)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if spec.title:
        out.append(f'<text x="{LEFT + PLOT_W / 2}" y="20" text-anchor="middle" '
                   f'font-size="14">{escape(spec.title)}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" '
               'fill="none" stroke="black"/>')
    for dec in range(ylo, yhi + 1):
        y = py(10.0 ** dec)
        out.append(f'<line x1="{LEFT}" y1="{_fmt(y)}" x2="{LEFT + PLOT_W}" y2="{_fmt(y)}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end">1e{dec}</text>')
    for v in sorted(set(xs)):
        x = px(v)
        out.append(f'<line x1="{_fmt(x)}" y1="{TOP + PLOT_H}" x2="{_fmt(x)}" '
                   f'y2="{TOP + PLOT_H + 4}" stroke="black"/>')
    for v in (min(xs), max(xs)):
        out.append(f'<text x="{_fmt(px(v))}" y="{TOP + PLOT_H + 18}" '
                   f'text-anchor="middle">{v:g}</text>')
    out.append(f'<text x="{LEFT + PLOT_W / 2}" y="{TOP + PLOT_H + 36}" '
               f'text-anchor="middle">{escape(X_FIELDS[spec.x])}</text>')
    out.append(f'<text x="18" y="{TOP + PLOT_H / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + PLOT_H / 2})">'
               f'{escape(METRICS[spec.metric])} ({escape(spec.aggregate)})</text>')

    clipped = False
    for idx, ((method, policy), pts) in enumerate(series.items()):
        color = COLORS[idx % len(COLORS)]
        dash = DASHES.get(policy, "")
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        coords = []
        markers = []
        for xv, yv in pts:
            x = px(xv)
            if not math.isfinite(yv):
                y, kind = TOP, "top"
            elif yv <= 0:
                y, kind = TOP + PLOT_H, "bottom"
            else:
                y, kind = py(yv), "point"
            coords.append((x, y))
            markers.append((x, y, kind))
        if len(coords) > 1:
            pts_attr = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)
            out.append(f'<polyline class="series" data-series="{escape(method)}/{escape(policy)}" '
                       f'points="{pts_attr}" fill="none" stroke="{color}" stroke-width="1.5"{dash_attr}/>')
        for x, y, kind in markers:
            if kind == "point":
                out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2.5" fill="{color}"/>')
            else:
                clipped = True
                tip, base = (y - 7, y + 1) if kind == "top" else (y + 7, y - 1)
                out.append(f'<path class="cap" d="M{_fmt(x - 5)},{_fmt(base)} L{_fmt(x)},{_fmt(tip)} '
                           f'L{_fmt(x + 5)},{_fmt(base)} Z" fill="{color}"/>')
        ly = TOP + 10 + 18 * idx
        lx = LEFT + PLOT_W + 16
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="1.5"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(method)} / {escape(policy)}</text>')
    if clipped:
        ly = TOP + 10 + 18 * len(series)
        lx = LEFT + PLOT_W + 16
        out.append(f'<path d="M{lx + 7},{ly + 4} L{lx + 12},{ly - 4} L{lx + 17},{ly + 4} Z" fill="black"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">inf or nan, clipped at top</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
