"""SVG export: one polyline per pen-down run, coloured by stroke."""

from xml.sax.saxutils import quoteattr

import numpy as np

from ..errors import EmptyInk

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def render_svg(seq, width=256, stroke_width=None, title=None):
    if len(seq) == 0:
        raise EmptyInk("cannot render an empty sequence")
    xy = seq.xy * [1.0, -1.0]  # SVG y grows downwards
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    margin = 0.05 * span.max() if span.max() > 1e-9 else 1.0
    x0, y0 = lo - margin
    w, h = span + 2 * margin
    sw = stroke_width if stroke_width is not None else 0.015 * max(w, h)
    height = width * h / w
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="{x0:.6g} {y0:.6g} {w:.6g} {h:.6g}">',
    ]
    if title:
        out.append(f"<title>{_escape(title)}</title>")
    for k, (start, stop) in enumerate(seq.stroke_slices()):
        pts = " ".join(f"{x:.5g},{y:.5g}" for x, y in xy[start:stop])
        color = PALETTE[k % len(PALETTE)]
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{sw:.4g}" '
            'stroke-linecap="round" stroke-linejoin="round"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text):
    return quoteattr(str(text))[1:-1]
