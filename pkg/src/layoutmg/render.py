"""Deterministic SVG rendering of graphs, layouts, and energy traces.

Output is plain SVG text with a fixed element order (edges in file order,
then vertex rectangles by id) and fixed 6-decimal coordinates, so identical
inputs produce byte-identical documents.  The vertical axis is flipped so +y
points up, matching the mathematical orientation of the layouts.
"""

from __future__ import annotations

from .graph import Graph, Layout

_STYLE = {
    "edge": 'stroke="#5b7ea6" stroke-width="{w}" stroke-linecap="round"',
    "rect": 'fill="#cfe2f3" fill-opacity="0.85" stroke="#1f4e79" stroke-width="{w}"',
    "grid": 'stroke="#bbbbbb" stroke-width="{w}" stroke-dasharray="{d}"',
    "frame": 'fill="none" stroke="#333333" stroke-width="{w}"',
}


def _f(v: float) -> str:
    s = format(v, ".6f")
    return "-0.000000" if s == "-0.000000" else s


def render_svg(graph: Graph, layout: Layout, *, show_edges: bool = True,
               grid_lines: int = 0, size: int = 720) -> str:
    """Render one rectangle per vertex and one line per edge.

    ``grid_lines`` > 0 overlays an n x n grid of the domain, useful for
    inspecting density constraints.
    """
    dom = layout.domain
    span = max(dom.width, dom.height)
    scale = size / span
    pad = 0.02 * size
    w = dom.width * scale + 2 * pad
    h = dom.height * scale + 2 * pad

    def tx(x: float) -> float:
        return pad + (x - dom.x0) * scale

    def ty(y: float) -> float:
        return pad + (dom.y1 - y) * scale

    hair = max(span / 900.0, 1e-6) * scale
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" height="{_f(h)}" '
           f'viewBox="0 0 {_f(w)} {_f(h)}">']
    out.append(f'<rect x="0" y="0" width="{_f(w)}" height="{_f(h)}" fill="#ffffff"/>')
    if grid_lines > 0:
        style = _STYLE["grid"].format(w=_f(hair * 0.7), d=_f(3 * hair))
        for i in range(1, grid_lines):
            gx = tx(dom.x0 + i * dom.width / grid_lines)
            gy = ty(dom.y0 + i * dom.height / grid_lines)
            out.append(f'<line x1="{_f(gx)}" y1="{_f(ty(dom.y0))}" x2="{_f(gx)}" '
                       f'y2="{_f(ty(dom.y1))}" {style}/>')
            out.append(f'<line x1="{_f(tx(dom.x0))}" y1="{_f(gy)}" x2="{_f(tx(dom.x1))}" '
                       f'y2="{_f(gy)}" {style}/>')
    out.append(f'<rect x="{_f(tx(dom.x0))}" y="{_f(ty(dom.y1))}" '
               f'width="{_f(dom.width * scale)}" height="{_f(dom.height * scale)}" '
               + _STYLE["frame"].format(w=_f(hair)) + "/>")
    if show_edges:
        style = _STYLE["edge"].format(w=_f(hair))
        for (i, j) in graph.edges:
            out.append(f'<line x1="{_f(tx(layout.x[i]))}" y1="{_f(ty(layout.y[i]))}" '
                       f'x2="{_f(tx(layout.x[j]))}" y2="{_f(ty(layout.y[j]))}" {style}/>')
    style = _STYLE["rect"].format(w=_f(hair))
    for i in range(graph.n_vertices):
        rw = graph.widths[i] * scale
        rh = graph.heights[i] * scale
        rx = tx(layout.x[i]) - rw / 2
        ry = ty(layout.y[i]) - rh / 2
        out.append(f'<rect x="{_f(rx)}" y="{_f(ry)}" width="{_f(rw)}" '
                   f'height="{_f(rh)}" {style}/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trace_plot_svg(energies: list[float], *, width: int = 720, height: int = 420,
                   title: str = "energy per cycle") -> str:
    """Minimal line chart of energy values against their index."""
    pad = 48.0
    n = len(energies)
    if n == 0:
        energies = [0.0]
        n = 1
    lo = min(energies)
    hi = max(energies)
    if hi <= lo:
        hi = lo + 1.0

    def px(i: int) -> float:
        return pad + (width - 2 * pad) * (i / max(1, n - 1))

    def py(e: float) -> float:
        return height - pad - (height - 2 * pad) * ((e - lo) / (hi - lo))

    pts = " ".join(f"{_f(px(i))},{_f(py(e))}" for i, e in enumerate(energies))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
           f'<rect x="{_f(pad)}" y="{_f(pad)}" width="{_f(width - 2 * pad)}" '
           f'height="{_f(height - 2 * pad)}" fill="none" stroke="#333333"/>',
           f'<text x="{_f(pad)}" y="{_f(pad - 10)}" font-family="monospace" '
           f'font-size="13">{title}</text>',
           f'<text x="{_f(pad - 42)}" y="{_f(py(hi) + 4)}" font-family="monospace" '
           f'font-size="11">{hi:.4g}</text>',
           f'<text x="{_f(pad - 42)}" y="{_f(py(lo) + 4)}" font-family="monospace" '
           f'font-size="11">{lo:.4g}</text>',
           f'<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="1.5"/>',
           "</svg>"]
    return "\n".join(out) + "\n"
