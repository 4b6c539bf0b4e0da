"""Minimal SVG line charts: mean line plus a shaded min/max band per series."""

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def line_chart(series, title="", xlabel="", ylabel="", width=640, height=400):
    """``series`` maps label -> list of (x, mean, lo, hi) points sorted by x."""
    pad_l, pad_r, pad_t, pad_b = 64, 140, 36, 48
    pts = [p for s in series.values() for p in s]
    if not pts:
        raise ValueError("nothing to plot")
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[2] for p in pts), max(p[3] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    span = y1 - y0
    y0, y1 = y0 - 0.05 * span, y1 + 0.05 * span
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return pad_t + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    for v in _ticks(y0, y1):
        out.append(f'<line x1="{pad_l - 4}" x2="{pad_l}" y1="{sy(v):.1f}" y2="{sy(v):.1f}" stroke="#333"/>')
        out.append(f'<text x="{pad_l - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for v in sorted({p[0] for p in pts}):
        out.append(f'<line x1="{sx(v):.1f}" x2="{sx(v):.1f}" y1="{pad_t + ph}" y2="{pad_t + ph + 4}" stroke="#333"/>')
        out.append(f'<text x="{sx(v):.1f}" y="{pad_t + ph + 16}" text-anchor="middle">{v:g}</text>')
    out.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{pad_t + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {pad_t + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (label, s) in enumerate(series.items()):
        c = PALETTE[i % len(PALETTE)]
        upper = " ".join(f"{sx(p[0]):.1f},{sy(p[3]):.1f}" for p in s)
        lower = " ".join(f"{sx(p[0]):.1f},{sy(p[2]):.1f}" for p in reversed(s))
        out.append(f'<polygon points="{upper} {lower}" fill="{c}" fill-opacity="0.15" stroke="none"/>')
        line = " ".join(f"{sx(p[0]):.1f},{sy(p[1]):.1f}" for p in s)
        out.append(f'<polyline points="{line}" fill="none" stroke="{c}" stroke-width="2"/>')
        for p in s:
            out.append(f'<circle cx="{sx(p[0]):.1f}" cy="{sy(p[1]):.1f}" r="3" fill="{c}"/>')
        ly = pad_t + 14 + 18 * i
        out.append(f'<line x1="{pad_l + pw + 12}" x2="{pad_l + pw + 32}" y1="{ly - 4}" y2="{ly - 4}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + pw + 38}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
