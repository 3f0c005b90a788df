"""Hand-emitted SVG heatmaps and CSV comparison tables.

No plotting dependency: cells are rects on a light-to-dark green ramp (score
rank maps to darkness), unexplored combinations are grey blocks, the
per-matrix maximum gets a red border, and comparison glyphs are blue
triangles. Element order is fixed so identical inputs produce byte-identical
SVG text.
"""

from __future__ import annotations

import math
from io import StringIO

import numpy as np

from .search import CellComparison, GridResult

LIGHT_GREEN = (146, 208, 80)
DARK_GREEN = (0, 176, 80)
GREY = (217, 217, 217)
GLYPH_BLUE = (0, 112, 192)
RED_BORDER = (192, 0, 0)

CELL_W, CELL_H, GAP = 92, 42, 4
MARGIN_LEFT, MARGIN_TOP, MARGIN = 96, 64, 12


def _rgb(c) -> str:
    return f"rgb({c[0]},{c[1]},{c[2]})"


def _blend(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    return _rgb(tuple(round(l + t * (d - l)) for l, d in zip(LIGHT_GREEN, DARK_GREEN)))


def render_heatmap(grid: GridResult, comparison: CellComparison | None = None,
                   title: str = "", annotation: str = "") -> str:
    """SVG text for one grid; optional comparison glyphs per cell.

    Rows run from the smallest sparsity at the top to the largest at the
    bottom, columns from the smallest sample count on the left, matching the
    search trajectory that walks from the lower right to the upper left.
    ``annotation`` is embedded as a trailing XML comment (provenance hook).
    """
    if not grid.cells:
        raise ValueError("cannot render an empty grid")
    matrix = grid.cell_matrix()
    rows, cols = matrix.shape
    finite = matrix[np.isfinite(matrix)]
    vmin = float(finite.min()) if finite.size else 0.0
    vmax = float(finite.max()) if finite.size else 1.0
    width = MARGIN_LEFT + cols * (CELL_W + GAP) + MARGIN
    height = MARGIN_TOP + rows * (CELL_H + GAP) + MARGIN
    out = StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
              f'height="{height}" viewBox="0 0 {width} {height}" '
              f'font-family="Helvetica,Arial,sans-serif">\n')
    out.write('<g class="axes" font-size="12" fill="rgb(40,40,40)">\n')
    if title:
        out.write(f'<text x="{MARGIN_LEFT}" y="18" font-size="14">{_esc(title)}</text>\n')
    out.write(f'<text x="{MARGIN_LEFT}" y="34" font-size="11">samples</text>\n')
    out.write(f'<text x="8" y="{MARGIN_TOP - 6}" font-size="11">sparsity</text>\n')
    for j in range(cols):
        n = grid.spec.sample_levels[cols - 1 - j]
        x = MARGIN_LEFT + j * (CELL_W + GAP) + CELL_W / 2
        out.write(f'<text x="{x:g}" y="{MARGIN_TOP - 6}" text-anchor="middle">{n}</text>\n')
    for i in range(rows):
        s = grid.spec.sparsity_levels[rows - 1 - i]
        y = MARGIN_TOP + i * (CELL_H + GAP) + CELL_H / 2 + 4
        out.write(f'<text x="{MARGIN_LEFT - 8}" y="{y:g}" text-anchor="end">'
                  f'{_sparsity_label(s)}</text>\n')
    out.write('</g>\n')
    out.write('<g class="cells" font-size="13">\n')
    for i in range(rows):          # display row: top = smallest sparsity
        ri = rows - 1 - i          # level index into the descending axis
        for j in range(cols):
            ci = cols - 1 - j
            x = MARGIN_LEFT + j * (CELL_W + GAP)
            y = MARGIN_TOP + i * (CELL_H + GAP)
            v = matrix[ri, ci]
            if not math.isfinite(v):
                out.write(f'<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" '
                          f'fill="{_rgb(GREY)}"/>\n')
                continue
            t = 1.0 if vmax == vmin else (v - vmin) / (vmax - vmin)
            border = (' stroke="%s" stroke-width="3"' % _rgb(RED_BORDER)) if v == vmax else ""
            out.write(f'<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" '
                      f'fill="{_blend(t)}"{border}/>\n')
            out.write(f'<text x="{x + CELL_W / 2:g}" y="{y + CELL_H / 2 + 4:g}" '
                      f'text-anchor="middle">{v:.4f}</text>\n')
            symbol = comparison.symbols[ri][ci] if comparison is not None else None
            if symbol in ("up", "down"):
                out.write(_triangle(x + CELL_W - 13, y + CELL_H / 2, symbol))
    out.write('</g>\n')
    if annotation:
        out.write(f"<!-- {_esc(annotation)} -->\n")
    out.write('</svg>\n')
    return out.getvalue()


def _triangle(cx: float, cy: float, direction: str) -> str:
    h = 5.0
    if direction == "up":
        pts = f"{cx - h:g},{cy + h:g} {cx + h:g},{cy + h:g} {cx:g},{cy - h:g}"
    else:
        pts = f"{cx - h:g},{cy - h:g} {cx + h:g},{cy - h:g} {cx:g},{cy + h:g}"
    return f'<polygon class="glyph-{direction}" points="{pts}" fill="{_rgb(GLYPH_BLUE)}"/>\n'


def _sparsity_label(s: float) -> str:
    return f"{s * 100:g}%"


def _esc(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def comparison_csv(baseline: GridResult, candidate: GridResult,
                   comparison: CellComparison, annotation: str = "") -> str:
    """CSV of per-cell scores and direction, plus the up/down/tie totals."""
    out = StringIO()
    if annotation:
        out.write(f"# {annotation}\n")
    out.write("sparsity,n_samples,baseline,candidate,direction\n")
    a = baseline.cell_matrix()
    b = candidate.cell_matrix()
    for i, s in enumerate(comparison.sparsity_levels):
        for j, n in enumerate(comparison.sample_levels):
            sym = comparison.symbols[i][j]
            if sym is None:
                continue
            out.write(f"{s:g},{n},{a[i, j]:.4f},{b[i, j]:.4f},{sym}\n")
    out.write(f"# ups={comparison.ups} downs={comparison.downs} ties={comparison.ties}\n")
    return out.getvalue()
