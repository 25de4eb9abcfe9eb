"""Minimal deterministic SVG drawing: axes with affine data-to-pixel maps."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np


def _f(v: float) -> str:
    # fixed precision keeps output byte-stable
    return f"{v:.2f}"


def nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1000 or a < 1e-3:
        return f"{v:.2g}"
    return f"{v:.4g}"


class Axes:
    """A plotting rectangle with linear maps from data to SVG user units."""

    def __init__(self, left, top, width, height, xlim, ylim):
        self.left, self.top, self.width, self.height = left, top, width, height
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x0 + 0.5
        if y1 <= y0:
            pad = max(abs(y0) * 0.05, 0.5)
            y0, y1 = y0 - pad, y0 + pad
        self.xlim, self.ylim = (float(x0), float(x1)), (float(y0), float(y1))
        self.parts = []

    def sx(self, x):
        x0, x1 = self.xlim
        return self.left + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * self.width

    def sy(self, y):
        y0, y1 = self.ylim
        return self.top + self.height - (np.asarray(y, dtype=float) - y0) / (y1 - y0) * self.height

    # -- primitives --------------------------------------------------------

    def polyline(self, x, y, stroke="#1f77b4", width=1.5, dash=None, **attrs):
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(self.sx(x), self.sy(y)))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{width}"{extra}{_attrs(attrs)}/>')

    def band(self, x, lo, hi, fill="#1f77b4", opacity=0.25, **attrs):
        xs, lo_px, hi_px = self.sx(x), self.sy(lo), self.sy(hi)
        pts = [f"{_f(a)},{_f(b)}" for a, b in zip(xs, hi_px)]
        pts += [f"{_f(a)},{_f(b)}" for a, b in zip(xs[::-1], lo_px[::-1])]
        self.parts.append(f'<polygon points="{" ".join(pts)}" fill="{fill}" '
                          f'fill-opacity="{opacity}" stroke="none"{_attrs(attrs)}/>')

    def points(self, x, y, fill="#d62728", r=1.8, **attrs):
        group = [f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{r}"/>'
                 for a, b in zip(self.sx(x), self.sy(y))]
        self.parts.append(f'<g fill="{fill}"{_attrs(attrs)}>' + "".join(group) + "</g>")

    def vline(self, x, stroke="black", width=1.2, dash=None, **attrs):
        px = float(self.sx(x))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<line x1="{_f(px)}" y1="{_f(self.top)}" x2="{_f(px)}" '
                          f'y2="{_f(self.top + self.height)}" stroke="{stroke}" '
                          f'stroke-width="{width}"{extra}{_attrs(attrs)}/>')

    def hline(self, y, stroke="black", width=1.0, dash=None, **attrs):
        py = float(self.sy(y))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<line x1="{_f(self.left)}" y1="{_f(py)}" '
                          f'x2="{_f(self.left + self.width)}" y2="{_f(py)}" stroke="{stroke}" '
                          f'stroke-width="{width}"{extra}{_attrs(attrs)}/>')

    def vspan(self, x0, x1, fill="#ff69b4", opacity=0.3, **attrs):
        a, b = float(self.sx(x0)), float(self.sx(x1))
        self.parts.append(f'<rect x="{_f(min(a, b))}" y="{_f(self.top)}" '
                          f'width="{_f(max(abs(b - a), 0.5))}" height="{_f(self.height)}" '
                          f'fill="{fill}" fill-opacity="{opacity}"{_attrs(attrs)}/>')

    def bars(self, edges, heights, fill="#1f77b4", opacity=0.6, **attrs):
        y0 = float(self.sy(0.0))
        rects = []
        for a, b, h in zip(edges[:-1], edges[1:], heights):
            xa, xb, yh = float(self.sx(a)), float(self.sx(b)), float(self.sy(h))
            rects.append(f'<rect x="{_f(xa)}" y="{_f(yh)}" width="{_f(max(xb - xa, 0.0))}" '
                         f'height="{_f(max(y0 - yh, 0.0))}"/>')
        self.parts.append(f'<g fill="{fill}" fill-opacity="{opacity}"{_attrs(attrs)}>'
                          + "".join(rects) + "</g>")

    def frame(self, title=None, xlabel=None, ylabel=None):
        out = [f'<rect x="{_f(self.left)}" y="{_f(self.top)}" width="{_f(self.width)}" '
               f'height="{_f(self.height)}" fill="none" stroke="#333" stroke-width="1"/>']
        for t in nice_ticks(*self.xlim):
            px = float(self.sx(t))
            yb = self.top + self.height
            out.append(f'<line x1="{_f(px)}" y1="{_f(yb)}" x2="{_f(px)}" y2="{_f(yb + 4)}" stroke="#333"/>')
            out.append(f'<text x="{_f(px)}" y="{_f(yb + 16)}" text-anchor="middle">{_fmt_tick(t)}</text>')
        for t in nice_ticks(*self.ylim):
            py = float(self.sy(t))
            out.append(f'<line x1="{_f(self.left - 4)}" y1="{_f(py)}" x2="{_f(self.left)}" y2="{_f(py)}" stroke="#333"/>')
            out.append(f'<text x="{_f(self.left - 6)}" y="{_f(py + 4)}" text-anchor="end">{_fmt_tick(t)}</text>')
        if title:
            out.append(f'<text x="{_f(self.left + self.width / 2)}" y="{_f(self.top - 8)}" '
                       f'text-anchor="middle" font-weight="bold">{escape(title)}</text>')
        if xlabel:
            out.append(f'<text x="{_f(self.left + self.width / 2)}" y="{_f(self.top + self.height + 34)}" '
                       f'text-anchor="middle">{escape(xlabel)}</text>')
        if ylabel:
            cx, cy = self.left - 42, self.top + self.height / 2
            out.append(f'<text x="{_f(cx)}" y="{_f(cy)}" text-anchor="middle" '
                       f'transform="rotate(-90 {_f(cx)} {_f(cy)})">{escape(ylabel)}</text>')
        self.parts = out[:1] + self.parts + out[1:]


def _attrs(attrs: dict) -> str:
    return "".join(f' {k.rstrip("_").replace("_", "-")}="{escape(str(v))}"' for k, v in attrs.items())


def document(width: int, height: int, axes_list, title=None) -> str:
    body = []
    if title:
        body.append(f'<text x="{_f(width / 2)}" y="20" text-anchor="middle" font-size="14" '
                    f'font-weight="bold">{escape(title)}</text>')
    for ax in axes_list:
        body.extend(ax.parts)
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")
