"""Minimal SVG line plots of power / conditional TDR against Type I error."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

_COLORS = {"vg": "#d62728", "vt": "#1f77b4", "gi": "#2ca02c"}
_W, _H = 480, 360
_L, _R, _T, _B = 60, 20, 40, 50


def _xy(x, y):
    px = _L + x * (_W - _L - _R)
    py = _H - _B - y * (_H - _T - _B)
    return f"{px:.2f},{py:.2f}"


def line_plot(series: dict, title: str, ylabel: str, xlabel: str = "Type I error") -> str:
    """``series`` maps a method name to a list of (x, y) points in [0, 1]^2."""
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>']
    x0, y0 = _xy(0, 0).split(",")
    x1, y1 = _xy(1, 1).split(",")
    out.append(f'<rect x="{x0}" y="{y1}" width="{float(x1) - float(x0):.2f}" '
               f'height="{float(y0) - float(y1):.2f}" fill="none" stroke="black"/>')
    for i in range(6):
        v = i / 5
        px, py = _xy(v, 0).split(",")
        out.append(f'<line x1="{px}" y1="{py}" x2="{px}" y2="{float(py) + 4:.2f}" stroke="black"/>')
        out.append(f'<text x="{px}" y="{float(py) + 16:.2f}" text-anchor="middle">{v:.1f}</text>')
        qx, qy = _xy(0, v).split(",")
        out.append(f'<line x1="{float(qx) - 4:.2f}" y1="{qy}" x2="{qx}" y2="{qy}" stroke="black"/>')
        out.append(f'<text x="{float(qx) - 7:.2f}" y="{float(qy) + 4:.2f}" text-anchor="end">{v:.1f}</text>')
    out.append(f'<text x="{(_L + _W - _R) / 2}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(_T + _H - _B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(_T + _H - _B) / 2})">{escape(ylabel)}</text>')
    for k, (name, pts) in enumerate(series.items()):
        color = _COLORS.get(name, "#555555")
        pts = [(x, y) for x, y in pts if y is not None and not math.isnan(y)]
        if pts:
            coords = " ".join(_xy(x, y) for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = _T + 14 + 14 * k
        out.append(f'<line x1="{_L + 10}" y1="{ly}" x2="{_L + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_L + 34}" y="{ly + 4}">{escape(name.upper())}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scenario_plots(curves, scenario: str) -> tuple[str, str]:
    """(power SVG, conditional TDR SVG) for one scenario's curves."""
    power, tdr = {}, {}
    for c in curves:
        if c.scenario != scenario:
            continue
        power[c.method] = [(r["type1"], r["power"]) for r in c.operating]
        tdr[c.method] = [(r["type1"], r["tdr"]) for r in c.operating]
    return (line_plot(power, f"Power vs Type I error ({scenario})", "Power"),
            line_plot(tdr, f"Conditional TDR vs Type I error ({scenario})", "Conditional TDR"))
