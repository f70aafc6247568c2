"""Static SVG scatter plots of snapshots (data, embeddings, codebook).

Every plot in a series shares one coordinate frame, so codebook motion
between snapshots reads directly off the image.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

SIZE = 480
MARGIN = 24
COLORS = {"disk": "#d62728", "triangle": "#2ca02c"}
CODE_COLOR = "#1f4fd8"


def shared_bounds(snapshots, pad=0.05):
    """Square bounding box covering points, embeddings and codes of all snapshots."""
    arrays = []
    for s in snapshots:
        for key in ("points", "embeddings", "codebook"):
            a = np.asarray(s.get(key, []), dtype=np.float64)
            if a.size:
                arrays.append(a.reshape(-1, a.shape[-1])[:, :2])
    allpts = np.vstack(arrays)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    cx, cy = ((lo + hi) / 2).tolist()
    half = max(float(np.max(hi - lo)) / 2, 1e-9) * (1 + pad)
    return (cx - half, cy - half, cx + half, cy + half)


def _star(cx, cy, r):
    pts = []
    for i in range(10):
        rad = r if i % 2 == 0 else r * 0.45
        a = -math.pi / 2 + i * math.pi / 5
        pts.append(f"{cx + rad * math.cos(a):.2f},{cy + rad * math.sin(a):.2f}")
    return "M" + " L".join(pts) + " Z"


def render_svg(snapshot: dict, bounds) -> str:
    x0, y0, x1, y1 = bounds
    span = SIZE - 2 * MARGIN

    def px(p):
        u = MARGIN + (p[0] - x0) / (x1 - x0) * span
        v = SIZE - MARGIN - (p[1] - y0) / (y1 - y0) * span
        return u, v

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SIZE} {SIZE}" '
        f'width="{SIZE}" height="{SIZE}" data-bounds="{x0!r} {y0!r} {x1!r} {y1!r}">',
        f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>',
        f'<text x="{MARGIN}" y="16" font-family="sans-serif" font-size="12">'
        f'{escape(str(snapshot.get("variant", "")))} step={snapshot["step"]} '
        f'stage={escape(str(snapshot["stage"]))} alpha={snapshot["alpha"]:.3f}</text>',
        f'<text x="{MARGIN}" y="{SIZE - 6}" font-family="sans-serif" font-size="10">'
        f'x [{x0:.3f}, {x1:.3f}]  y [{y0:.3f}, {y1:.3f}]</text>',
    ]
    out.append('<g id="data" fill="#999999" fill-opacity="0.25">')
    for p in snapshot.get("points", []):
        u, v = px(p)
        out.append(f'<circle class="data" cx="{u:.2f}" cy="{v:.2f}" r="1.5"/>')
    out.append("</g>")

    out.append('<g id="embeddings" fill-opacity="0.8">')
    modes = snapshot.get("mode") or ["disk"] * len(snapshot["embeddings"])
    for p, m in zip(snapshot["embeddings"], modes):
        u, v = px(p)
        out.append(f'<circle class="embedding {m}" cx="{u:.2f}" cy="{v:.2f}" r="2" '
                   f'fill="{COLORS.get(m, "#444444")}"/>')
    out.append("</g>")

    out.append(f'<g id="codebook" fill="{CODE_COLOR}" stroke="black" stroke-width="0.3">')
    for p in snapshot["codebook"]:
        u, v = px(p)
        out.append(f'<path class="code" d="{_star(u, v, 5)}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_snapshots(snapshots, paths):
    """Write one SVG per snapshot using shared axes; returns the paths."""
    if not snapshots:
        raise ValueError("no snapshots to plot")
    bounds = shared_bounds(snapshots)
    written = []
    for snap, path in zip(snapshots, paths):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_svg(snap, bounds))
        written.append(path)
    return written
