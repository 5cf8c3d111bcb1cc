"""Minimal SVG scatter plots for fronts; no plotting dependency."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, PAD = 480, 400, 50


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def front_svg(learned=None, dataset=None, oracle=None, reference_point=None,
              title: str = "", warning: str | None = None) -> str:
    """Dataset returns in grey, the learned front in blue, the oracle front as a line.

    Only the first two objectives are drawn.
    """
    layers = {k: np.empty((0, 2)) if v is None or len(v) == 0 else np.asarray(v, float)[:, :2]
              for k, v in (("learned", learned), ("dataset", dataset), ("oracle", oracle))}
    ref = None if reference_point is None else np.asarray(reference_point, float)[:2]
    pts = [v for v in layers.values() if len(v)]
    if ref is not None:
        pts.append(ref[None])
    allp = np.vstack(pts) if pts else np.zeros((1, 2))
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    margin = 0.05 * np.maximum(hi - lo, 1e-9)
    lo, hi = lo - margin, hi + margin
    sx = _scale(lo[0], hi[0], PAD, WIDTH - PAD / 2)
    sy = _scale(lo[1], hi[1], HEIGHT - PAD, PAD / 2)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD / 2}" y2="{HEIGHT - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{PAD}" y2="{PAD / 2}" stroke="black"/>',
           f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">objective 1</text>',
           f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 14 {HEIGHT / 2})">objective 2</text>']
    for v, anchor, x, y in ((lo[0], "start", PAD, HEIGHT - PAD + 15), (hi[0], "end", WIDTH - PAD / 2, HEIGHT - PAD + 15)):
        out.append(f'<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{v:.3g}</text>')
    for v, y in ((lo[1], HEIGHT - PAD), (hi[1], PAD / 2 + 8)):
        out.append(f'<text x="{PAD - 4}" y="{y}" text-anchor="end" font-size="10">{v:.3g}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>')

    for x, y in layers["dataset"]:
        out.append(f'<circle class="dataset" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2" fill="#b0b0b0"/>')
    orc = layers["oracle"]
    if len(orc):
        orc = orc[np.argsort(orc[:, 0])]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in orc)
        out.append(f'<polyline points="{path}" fill="none" stroke="black" stroke-width="1"/>')
        for x, y in orc:
            out.append(f'<rect class="oracle" x="{sx(x) - 3:.2f}" y="{sy(y) - 3:.2f}" width="6" '
                       f'height="6" fill="none" stroke="black"/>')
    for x, y in layers["learned"]:
        out.append(f'<circle class="learned" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#1f77b4"/>')
    if ref is not None:
        out.append(f'<circle class="reference" cx="{sx(ref[0]):.2f}" cy="{sy(ref[1]):.2f}" r="4" '
                   f'fill="none" stroke="red"/>')
        out.append(f'<text x="{sx(ref[0]) + 6:.2f}" y="{sy(ref[1]) - 6:.2f}" font-size="10" fill="red">'
                   f'r0 = ({ref[0]:g}, {ref[1]:g})</text>')
    if warning:
        out.append(f'<text class="warning" x="{WIDTH / 2}" y="{HEIGHT / 2}" text-anchor="middle" '
                   f'font-size="14" fill="#b00">{escape(warning)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
