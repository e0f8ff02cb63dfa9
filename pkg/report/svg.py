import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np
from pydantic import BaseModel, field_validator

from data.design_gen import ALL_METHODS, Method
from data.errors import ArgumentError, ContractError

logger = logging.getLogger(__name__)

# Couleur et tirets fixes par méthode, identiques dans tous les panneaux
STYLES = {
    "M1": ("#1f77b4", ""),
    "M2": ("#d62728", ""),
    "M3": ("#2ca02c", ""),
    "M4": ("#ff7f0e", "6,3"),
    "M5": ("#9467bd", "6,3"),
    "M6": ("#8c564b", "2,2"),
    "M7": ("#7f7f7f", "2,2"),
}
DEFAULT_STYLE = ("#000000", "")

PANEL_WIDTH = 360
PANEL_HEIGHT = 280
MARGIN = {"left": 60, "right": 15, "top": 32, "bottom": 48}
LEGEND_WIDTH = 190


class PlotSpec(BaseModel):
    rows: int = 1
    cols: int = 1
    title: str = ""
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    boundaries: bool = True
    legend_order: List[str] = [m.value for m in ALL_METHODS]
    out: Optional[str] = None

    @field_validator("rows", "cols")
    @classmethod
    def positive(cls, value):
        if value < 1:
            raise ValueError("la grille doit avoir au moins une case")
        return value


@dataclass
class Panel:
    kind: str
    data: object
    title: str = ""
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    boundaries: Sequence[float] = field(default_factory=list)


class SVG:
    def __init__(self):
        self.svg = ""

    def header(self, width, height):
        self.svg += (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            f'<svg version="1.1" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" xmlns="http://www.w3.org/2000/svg">\n'
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n'
        )

    def group_start(self, attr):
        g_attr = " ".join(f'{key}="{_attr(value)}"' for key, value in attr.items())
        self.svg += f"<g {g_attr}>\n"

    def group_end(self):
        self.svg += "</g>\n"

    def line(self, x1, y1, x2, y2, css_class, stroke="#000000", dash="", width=1.0):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.svg += (
            f'<line class="{css_class}" x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{stroke}" stroke-width="{width:.1f}"{dash_attr}/>\n'
        )

    def path(self, d, css_class, stroke, dash="", extra=""):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.svg += (
            f'<path class="{css_class}" d="{d}" fill="none" stroke="{stroke}" '
            f'stroke-width="1.5"{dash_attr} {extra}/>\n'
        )

    def rect(self, x1, y1, x2, y2, css_class, stroke, fill="none"):
        self.svg += (
            f'<rect class="{css_class}" x="{min(x1, x2):.2f}" y="{min(y1, y2):.2f}" '
            f'width="{abs(x2 - x1):.2f}" height="{abs(y2 - y1):.2f}" '
            f'fill="{fill}" stroke="{stroke}"/>\n'
        )

    def circle(self, x, y, r, css_class, stroke):
        self.svg += f'<circle class="{css_class}" cx="{x:.2f}" cy="{y:.2f}" r="{r:.1f}" fill="none" stroke="{stroke}"/>\n'

    def text(self, x, y, string, anchor="middle", size=11, extra=""):
        self.svg += (
            f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}"{extra}>{escape(str(string))}</text>\n'
        )

    def get_svg(self):
        return f"{self.svg}</svg>\n"


def _attr(value):
    return escape(str(value), {"\"": "&quot;"})


def style(method):
    return STYLES.get(str(method), DEFAULT_STYLE)


def method_label(method):
    try:
        parsed = Method.parse(method)
        return f"{parsed.value} {parsed.label}"
    except ArgumentError:
        return str(method)


def _range(values, pad=0.05):
    values = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if values.size == 0:
        return 0.0, 1.0
    low, high = float(values.min()), float(values.max())
    if high == low:
        half = max(abs(low) * 0.05, 0.5)
        return low - half, high + half
    span = high - low
    return low - pad * span, high + pad * span


def _ticks(low, high, count=5):
    return np.linspace(low, high, count)


class _Frame:
    """Repère d'un panneau: conversion données -> pixels."""

    def __init__(self, x0, y0, xlim, ylim):
        self.left = x0 + MARGIN["left"]
        self.right = x0 + PANEL_WIDTH - MARGIN["right"]
        self.top = y0 + MARGIN["top"]
        self.bottom = y0 + PANEL_HEIGHT - MARGIN["bottom"]
        self.xlim = xlim
        self.ylim = ylim

    def x(self, value):
        low, high = self.xlim
        return self.left + (value - low) / (high - low) * (self.right - self.left)

    def y(self, value):
        low, high = self.ylim
        return self.bottom - (value - low) / (high - low) * (self.bottom - self.top)


def _axes(svg, frame, title, xlabel, ylabel, xticks=True):
    svg.line(frame.left, frame.bottom, frame.right, frame.bottom, "axis")
    svg.line(frame.left, frame.top, frame.left, frame.bottom, "axis")
    svg.text((frame.left + frame.right) / 2, frame.top - 12, title, size=12)
    if xlabel:
        svg.text((frame.left + frame.right) / 2, frame.bottom + 36, xlabel)
    if ylabel:
        cy = (frame.top + frame.bottom) / 2
        svg.text(frame.left - 45, cy, ylabel, extra=f' transform="rotate(-90 {frame.left - 45:.2f} {cy:.2f})"')

    for value in _ticks(*frame.ylim):
        svg.line(frame.left - 4, frame.y(value), frame.left, frame.y(value), "tick")
        svg.text(frame.left - 6, frame.y(value) + 4, f"{value:.3g}", anchor="end", size=9)
    if xticks:
        for value in _ticks(*frame.xlim):
            svg.line(frame.x(value), frame.bottom, frame.x(value), frame.bottom + 4, "tick")
            svg.text(frame.x(value), frame.bottom + 16, f"{value:.3g}", size=9)


def step_path(curve, frame):
    """Escalier horizontal puis vertical, continu à droite."""
    commands = [f"M{frame.x(frame.xlim[0]):.2f},{frame.y(0.0):.2f}"]
    for x, p in zip(curve.xs, curve.ps):
        commands.append(f"H{frame.x(x):.2f}")
        commands.append(f"V{frame.y(p):.2f}")
    commands.append(f"H{frame.x(frame.xlim[1]):.2f}")
    return " ".join(commands)


def _check_curves(curves):
    if not curves:
        raise ArgumentError("Aucune courbe à tracer")
    kinds = {getattr(c.kind, "value", c.kind) for c in curves}
    schemes = {c.scheme for c in curves if c.scheme is not None}
    if len(kinds) > 1:
        raise ContractError(f"Types de courbes mélangés: {sorted(kinds)}")
    if len(schemes) > 1:
        raise ContractError(f"Schémas de standardisation mélangés: {sorted(schemes)}")
    return kinds.pop(), (schemes.pop() if schemes else None)


def _ecdf_panel(svg, panel, x0, y0):
    curves = panel.data
    kind, scheme = _check_curves(curves)
    finite_xs = [x for c in curves for x in c.xs if np.isfinite(x)]
    xlim = _range(finite_xs + list(panel.boundaries))
    frame = _Frame(x0, y0, xlim, (0.0, 1.0))

    xlabel = panel.xlabel or (f"score standardisé ({scheme})" if scheme else kind)
    ylabel = panel.ylabel or "proportion"

    svg.group_start({"class": "panel", "data-kind": kind, "data-xmin": f"{xlim[0]:.6g}", "data-xmax": f"{xlim[1]:.6g}"})
    _axes(svg, frame, panel.title, xlabel, ylabel)
    for curve in curves:
        color, dash = style(curve.method)
        svg.path(step_path(curve, frame), "curve", color, dash, extra=f'data-method="{_attr(curve.method)}"')
    for boundary in panel.boundaries:
        svg.line(frame.x(boundary), frame.top, frame.x(boundary), frame.bottom, "boundary", "#444444", "4,4")
    svg.group_end()


def boxplot_stats(values):
    """Résumé en cinq nombres; quartiles par interpolation linéaire (type 7)."""
    values = np.asarray(values, dtype=float)
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = values[(values >= low_fence) & (values <= high_fence)]
    return {
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": sorted(float(v) for v in values[(values < low_fence) | (values > high_fence)]),
    }


def _boxplot_panel(svg, panel, x0, y0, order):
    groups = {}
    for method, values in panel.data.items():
        values = np.asarray(values, dtype=float)
        values = values[np.isfinite(values)]
        if values.size < 1:
            logger.warning("Groupe %s vide, boîte omise", method)
            continue
        groups[str(method)] = values
    methods = [m for m in order if m in groups] + sorted(m for m in groups if m not in order)

    ylim = _range([v for values in groups.values() for v in values])
    frame = _Frame(x0, y0, (0.0, float(max(len(methods), 1))), ylim)

    svg.group_start({"class": "panel", "data-kind": "boxplot", "data-ymin": f"{ylim[0]:.6g}", "data-ymax": f"{ylim[1]:.6g}"})
    _axes(svg, frame, panel.title, panel.xlabel or "méthode", panel.ylabel, xticks=False)
    for index, method in enumerate(methods):
        stats = boxplot_stats(groups[method])
        color, _ = style(method)
        centre = frame.x(index + 0.5)
        half = 0.3 * (frame.x(1.0) - frame.x(0.0))

        svg.group_start({"class": "box-group", "data-method": method, "data-median": f"{stats['median']:.6g}"})
        svg.rect(centre - half, frame.y(stats["q1"]), centre + half, frame.y(stats["q3"]), "box", color)
        svg.line(centre - half, frame.y(stats["median"]), centre + half, frame.y(stats["median"]), "median", color, width=2.0)
        svg.line(centre, frame.y(stats["q3"]), centre, frame.y(stats["whisker_high"]), "whisker", color)
        svg.line(centre, frame.y(stats["q1"]), centre, frame.y(stats["whisker_low"]), "whisker", color)
        for outlier in stats["outliers"]:
            svg.circle(centre, frame.y(outlier), 2.5, "outlier", color)
        svg.text(centre, frame.bottom + 16, method, size=10)
        svg.group_end()
    svg.group_end()


def _legend(svg, x0, methods):
    svg.group_start({"class": "legend"})
    for index, method in enumerate(methods):
        y = MARGIN["top"] + 18 * index
        color, dash = style(method)
        svg.line(x0 + 10, y, x0 + 40, y, "legend-key", color, dash, width=1.5)
        svg.text(x0 + 46, y + 4, method_label(method), anchor="start", size=10)
    svg.group_end()


def render_document(panels, spec=None):
    spec = spec or PlotSpec(rows=1, cols=len(panels))
    if len(panels) > spec.rows * spec.cols:
        raise ArgumentError(f"{len(panels)} panneaux pour une grille {spec.rows}×{spec.cols}")

    methods = set()
    for panel in panels:
        if panel.kind == "ecdf":
            methods.update(str(c.method) for c in panel.data)
        else:
            methods.update(str(m) for m in panel.data)
    legend = [m for m in spec.legend_order if m in methods] + sorted(methods - set(spec.legend_order))

    title_height = 24 if spec.title else 0
    width = spec.cols * PANEL_WIDTH + LEGEND_WIDTH
    height = spec.rows * PANEL_HEIGHT + title_height

    svg = SVG()
    svg.header(width, height)
    if spec.title:
        svg.text(width / 2, 18, spec.title, size=14)

    for index, panel in enumerate(panels):
        row, col = divmod(index, spec.cols)
        x0, y0 = col * PANEL_WIDTH, row * PANEL_HEIGHT + title_height
        if panel.kind == "ecdf":
            if not spec.boundaries:
                panel = Panel(panel.kind, panel.data, panel.title, panel.xlabel, panel.ylabel, [])
            _ecdf_panel(svg, panel, x0, y0)
        elif panel.kind == "boxplot":
            _boxplot_panel(svg, panel, x0, y0, spec.legend_order)
        else:
            raise ArgumentError(f"Type de panneau inconnu: {panel.kind}")

    _legend(svg, spec.cols * PANEL_WIDTH, legend)
    document = svg.get_svg()

    if spec.out:
        with open(spec.out, "w", encoding="utf-8") as f:
            f.write(document)
        logger.info("Figure écrite: %s", spec.out)
    return document


def render_ecdf_panel(curves, spec=None, boundaries=None, collapse_spec=None):
    spec = spec or PlotSpec()
    title = spec.title or (collapse_spec.title() if collapse_spec is not None else "")
    panel = Panel("ecdf", curves, title, spec.xlabel, spec.ylabel, list(boundaries or []))
    return render_document([panel], spec.model_copy(update={"rows": 1, "cols": 1, "title": ""}))


def render_boxplot_panel(groups: Dict[str, Sequence[float]], spec=None):
    spec = spec or PlotSpec()
    if not groups:
        raise ArgumentError("Aucun groupe à tracer")
    panel = Panel("boxplot", groups, spec.title, spec.xlabel, spec.ylabel)
    return render_document([panel], spec.model_copy(update={"rows": 1, "cols": 1, "title": ""}))
