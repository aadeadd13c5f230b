"""Minimal deterministic SVG line charts (no plotting backend required)."""
from __future__ import annotations

import math
from html import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class Panel:
    """One plotting area inside a figure; data are mapped to pixel space."""

    def __init__(self, x0, y0, width, height, title=""):
        self.box = (x0, y0, width, height)
        self.title = title
        self.series: list[tuple[np.ndarray, np.ndarray, str, str]] = []
        self.bands: list[tuple[float, float]] = []
        self.errorbars: list[tuple[np.ndarray, np.ndarray, np.ndarray, str]] = []

    def line(self, x, y, label="", color=None):
        color = color or PALETTE[len(self.series) % len(PALETTE)]
        self.series.append((np.asarray(x, float), np.asarray(y, float), label, color))

    def band(self, x_start, x_end):
        self.bands.append((float(x_start), float(x_end)))

    def errorbar(self, x, y, err, color=None):
        color = color or PALETTE[len(self.errorbars) % len(PALETTE)]
        self.errorbars.append((np.asarray(x, float), np.asarray(y, float), np.asarray(err, float), color))

    def _limits(self):
        xs = [s[0] for s in self.series] + [e[0] for e in self.errorbars]
        ys = [s[1] for s in self.series]
        ys += [e[1] - e[2] for e in self.errorbars] + [e[1] + e[2] for e in self.errorbars]
        xs = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        ys = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        x_lo, x_hi = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        y_lo, y_hi = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        if y_hi == y_lo:
            pad = abs(y_lo) * 0.05 or 0.5
            y_lo, y_hi = y_lo - pad, y_hi + pad
        return x_lo, x_hi, y_lo, y_hi

    def render(self) -> list[str]:
        x0, y0, w, h = self.box
        x_lo, x_hi, y_lo, y_hi = self._limits()

        def px(x):
            return x0 + (x - x_lo) / (x_hi - x_lo) * w

        def py(y):
            return y0 + h - (y - y_lo) / (y_hi - y_lo) * h

        out = [
            f'<g class="panel">',
            f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            'fill="none" stroke="#444" stroke-width="0.5"/>',
            f'<text x="{_fmt(x0)}" y="{_fmt(y0 - 4)}" font-size="11">{escape(self.title)}</text>',
            f'<text x="{_fmt(x0 - 4)}" y="{_fmt(y0 + 9)}" font-size="8" text-anchor="end">{y_hi:.3g}</text>',
            f'<text x="{_fmt(x0 - 4)}" y="{_fmt(y0 + h)}" font-size="8" text-anchor="end">{y_lo:.3g}</text>',
        ]
        for a, b in self.bands:
            a, b = max(a, x_lo), min(b, x_hi)
            out.append(
                f'<rect class="warning-band" x="{_fmt(px(a))}" y="{_fmt(y0)}" '
                f'width="{_fmt(max(px(b) - px(a), 1.0))}" height="{_fmt(h)}" '
                'fill="#d62728" fill-opacity="0.2" stroke="none"/>'
            )
        for x, y, label, color in self.series:
            ok = np.isfinite(x) & np.isfinite(y)
            pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x[ok], y[ok]))
            out.append(
                f'<polyline data-label="{escape(label)}" points="{pts}" fill="none" '
                f'stroke="{color}" stroke-width="1"/>'
            )
        for x, y, err, color in self.errorbars:
            for a, b, e in zip(x, y, err):
                e = 0.0 if not math.isfinite(e) else e
                out.append(
                    f'<line class="errorbar" x1="{_fmt(px(a))}" y1="{_fmt(py(b - e))}" '
                    f'x2="{_fmt(px(a))}" y2="{_fmt(py(b + e))}" stroke="{color}"/>'
                )
                out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="2" fill="{color}"/>')
        labels = [s for s in self.series if s[2]]
        for k, (_, _, label, color) in enumerate(labels):
            out.append(
                f'<text x="{_fmt(x0 + w - 4)}" y="{_fmt(y0 + 12 + 11 * k)}" font-size="9" '
                f'text-anchor="end" fill="{color}">{escape(label)}</text>'
            )
        out.append("</g>")
        return out


def figure(panels: list[Panel], width: int, height: int, title: str = "") -> str:
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="16" font-size="13" text-anchor="middle">{escape(title)}</text>')
    for p in panels:
        parts.extend(p.render())
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def stacked(titles: list[str], width: int = 900, panel_height: int = 150) -> tuple[list[Panel], int]:
    """Vertically stacked panels sharing the same horizontal extent."""
    top, gap, left = 36, 34, 60
    panels = [
        Panel(left, top + i * (panel_height + gap), width - left - 20, panel_height, t)
        for i, t in enumerate(titles)
    ]
    return panels, top + len(titles) * (panel_height + gap)
