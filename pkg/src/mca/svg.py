"""Minimal static SVG output: CCM skill curves and signed heatmaps."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

MIDPOINT = "#f7f7f7"
NEG = (33, 102, 172)
POS = (178, 24, 43)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def signed_color(v: float, limit: float) -> str:
    """Diverging blue-white-red; exactly ``MIDPOINT`` at 0."""
    if limit <= 0 or v == 0:
        return MIDPOINT
    t = max(-1.0, min(1.0, v / limit))
    mid = (247, 247, 247)
    end = POS if t > 0 else NEG
    a = abs(t)
    rgb = tuple(int(round(m + (e - m) * a)) for m, e in zip(mid, end))
    return "#%02x%02x%02x" % rgb


def _doc(w, h, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n'
            f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>\n' + "\n".join(body) + "\n</svg>\n")


def render_curves(rows: list, path, title: str = "") -> None:
    """Median curves with p25-p75 whiskers per direction; '*' where significant.

    ``rows`` are dicts with fraction, pair, direction, median, p25, p75, significant.
    """
    W, H, M = 640, 420, 60
    fr = sorted({float(r["fraction"]) for r in rows})
    lo = min([float(r["p25"]) for r in rows] + [0.0])
    hi = max([float(r["p75"]) for r in rows] + [1.0])
    fx0, fx1 = (fr[0], fr[-1]) if len(fr) > 1 else (fr[0] - 0.5, fr[0] + 0.5)

    def X(f):
        return M + (f - fx0) / (fx1 - fx0) * (W - 2 * M)

    def Y(v):
        return H - M - (v - lo) / (hi - lo) * (H - 2 * M)

    body = [f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<line class="axis" x1="{M}" y1="{H - M}" x2="{W - M}" y2="{H - M}" stroke="#000"/>',
            f'<line class="axis" x1="{M}" y1="{M}" x2="{M}" y2="{H - M}" stroke="#000"/>']
    for f in fr:
        body.append(f'<text x="{X(f):.2f}" y="{H - M + 18}" text-anchor="middle" font-size="11">{f:g}</text>')
    directions = []
    for r in rows:
        if r["direction"] not in directions:
            directions.append(r["direction"])
    sig_marked = set()
    for n, d in enumerate(directions):
        pts = sorted((float(r["fraction"]), r) for r in rows if r["direction"] == d)
        color = PALETTE[n % len(PALETTE)]
        poly = " ".join(f"{X(f):.2f},{Y(float(r['median'])):.2f}" for f, r in pts)
        body.append(f'<polyline class="curve" points="{poly}" fill="none" stroke="{color}" stroke-width="2"/>')
        for f, r in pts:
            body.append(f'<line class="whisker" x1="{X(f):.2f}" y1="{Y(float(r["p25"])):.2f}" '
                        f'x2="{X(f):.2f}" y2="{Y(float(r["p75"])):.2f}" stroke="{color}"/>')
            if str(r["significant"]).lower() in ("1", "true") and (r["pair"], f) not in sig_marked:
                sig_marked.add((r["pair"], f))
                body.append(f'<text class="sig" x="{X(f):.2f}" y="{M - 6}" text-anchor="middle" font-size="16">*</text>')
        body.append(f'<text x="{W - M + 4}" y="{M + 16 * n}" font-size="11" fill="{color}">{escape(d)}</text>')
    with open(path, "w") as fh:
        fh.write(_doc(W, H, body))


def render_heatmap(values, path, title: str = "", cell: int = 8) -> None:
    """Signed heatmap centred at 0 (the midpoint colour)."""
    v = np.atleast_2d(np.asarray(values, dtype=float))
    finite = v[np.isfinite(v)]
    limit = float(np.abs(finite).max()) if finite.size else 0.0
    rows, cols = v.shape
    W, H = cols * cell + 20, rows * cell + 40
    body = [f'<text x="10" y="20" font-size="12">{escape(title)} (|max| = {limit:.4g})</text>']
    for i in range(rows):
        for j in range(cols):
            x = v[i, j]
            fill = signed_color(x, limit) if np.isfinite(x) else "#cccccc"
            body.append(f'<rect class="cell" x="{10 + j * cell}" y="{30 + i * cell}" '
                        f'width="{cell}" height="{cell}" fill="{fill}"/>')
    with open(path, "w") as fh:
        fh.write(_doc(W, H, body))


def influence_grid(nodes, scores, grid, grid_shape) -> np.ndarray:
    """Place per-node scores on the pixel lattice; unscored pixels are NaN."""
    out = np.full(grid_shape, np.nan)
    for n, s in zip(nodes, scores):
        r, c = grid[n]
        out[r, c] = s
    return out
