"""Minimal log-log scatter plot written as SVG text."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 480
LEFT, RIGHT, TOP, BOTTOM = 80, 30, 40, 60


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1))


def loglog_svg(xs: Sequence[float], ys: Sequence[float], errs: Sequence[float],
               slope: float, title: str, xlabel: str, ylabel: str, comment: str = "") -> str:
    """Points with vertical error bars, the least-squares line in log-log
    space and a slope annotation.  Non-positive values are clipped to the
    bottom of the axis."""
    pos = [y for y in ys if y > 0] + [y + e for y, e in zip(ys, errs) if y + e > 0]
    ylo = min(pos) / 2 if pos else 1e-3
    yhi = max(pos) * 2 if pos else 1.0
    xlo, xhi = min(xs) / 1.5, max(xs) * 1.5
    lx0, lx1 = math.log10(xlo), math.log10(xhi)
    ly0, ly1 = math.log10(ylo), math.log10(yhi)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (math.log10(x) - lx0) / (lx1 - lx0) * pw

    def py(y):
        y = max(y, ylo)
        return TOP + (ly1 - math.log10(y)) / (ly1 - ly0) * ph

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if comment:
        if "--" in comment or comment.endswith("-"):
            raise ValueError("SVG comments may not contain '--'")
        out.append(f"<!--\n{comment}\n-->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">')
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for d in _decades(xlo, xhi):
        for k in range(1, 10):
            x = k * 10.0 ** d
            if xlo <= x <= xhi:
                X = _fmt(px(x))
                major = k == 1
                out.append(f'<line x1="{X}" y1="{TOP + ph}" x2="{X}" y2="{TOP + ph + (6 if major else 3)}" stroke="black"/>')
                if major:
                    out.append(f'<text x="{X}" y="{TOP + ph + 20}" text-anchor="middle">1e{d}</text>')
    for d in _decades(ylo, yhi):
        for k in range(1, 10):
            y = k * 10.0 ** d
            if ylo <= y <= yhi:
                Y = _fmt(py(y))
                major = k == 1
                out.append(f'<line x1="{LEFT - (6 if major else 3)}" y1="{Y}" x2="{LEFT}" y2="{Y}" stroke="black"/>')
                if major:
                    out.append(f'<text x="{LEFT - 10}" y="{Y}" text-anchor="end" dominant-baseline="middle">1e{d}</text>')
    if math.isfinite(slope) and all(y > 0 for y in ys):
        lxs = [math.log10(x) for x in xs]
        lys = [math.log10(y) for y in ys]
        icpt = sum(lys) / len(lys) - slope * sum(lxs) / len(lxs)
        x0, x1 = min(xs), max(xs)
        y0, y1 = 10 ** (icpt + slope * math.log10(x0)), 10 ** (icpt + slope * math.log10(x1))
        out.append(f'<line x1="{_fmt(px(x0))}" y1="{_fmt(py(y0))}" x2="{_fmt(px(x1))}" '
                   f'y2="{_fmt(py(y1))}" stroke="#c0392b" stroke-dasharray="6,4"/>')
    for x, y, e in zip(xs, ys, errs):
        X = _fmt(px(x))
        out.append(f'<line x1="{X}" y1="{_fmt(py(y - e))}" x2="{X}" y2="{_fmt(py(y + e))}" stroke="#2c7fb8"/>')
        out.append(f'<circle cx="{X}" cy="{_fmt(py(y))}" r="4" fill="#2c7fb8"/>')
    label = f"fitted slope = {slope:.3f}" if math.isfinite(slope) else "fitted slope undefined"
    out.append(f'<text x="{LEFT + pw - 10}" y="{TOP + 20}" text-anchor="end" fill="#c0392b">{escape(label)}</text>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{TOP - 15}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="20" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
