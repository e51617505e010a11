"""Minimal dependency-free SVG charts for CDF and PDF report files."""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22")


def _frame(title: str, xlabel: str, ylabel: str, body: list[str], legend: list[str]) -> str:
    x0, y0, x1, y1 = MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    parts += body
    for i, name in enumerate(legend):
        y = MARGIN + 14 * i
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<rect x="{x1 - 120}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{x1 - 105}" y="{y + 1}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _scale(v, lo, hi, a, b):
    if hi == lo:
        return (a + b) / 2
    return a + (v - lo) * (b - a) / (hi - lo)


def cdf_chart(curves: dict, title: str = "CDF") -> str:
    """Step lines, one per ``{name: [(value, cum), ...]}`` entry."""
    xs = [v for pts in curves.values() for v, _ in pts] or [0.0, 1.0]
    lo, hi = min(xs), max(xs)
    body = []
    for i, pts in enumerate(curves.values()):
        path, prev = [], 0.0
        for v, c in pts:
            x = _scale(v, lo, hi, MARGIN, WIDTH - MARGIN)
            path.append(f"{x:.2f},{_scale(prev, 0, 1, HEIGHT - MARGIN, MARGIN):.2f}")
            path.append(f"{x:.2f},{_scale(c, 0, 1, HEIGHT - MARGIN, MARGIN):.2f}")
            prev = c
        color = PALETTE[i % len(PALETTE)]
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(path)}"/>')
    return _frame(title, "throughput (SE per TTI)", "CDF", body, list(curves))


def pdf_chart(pdfs: dict, title: str = "PDF") -> str:
    """Grouped bars, one group per MCS index, one bar per ``{name: probs}`` entry."""
    names = list(pdfs)
    n_bins = max((len(p) for p in pdfs.values()), default=1)
    top = max((max(p) for p in pdfs.values() if len(p)), default=1.0) or 1.0
    group = (WIDTH - 2 * MARGIN) / n_bins
    bar = group / max(len(names), 1)
    body = []
    for j, name in enumerate(names):
        color = PALETTE[j % len(PALETTE)]
        for m, p in enumerate(pdfs[name]):
            h = (HEIGHT - 2 * MARGIN) * float(p) / top
            x = MARGIN + m * group + j * bar
            body.append(f'<rect x="{x:.2f}" y="{HEIGHT - MARGIN - h:.2f}" width="{bar:.2f}" height="{h:.2f}" fill="{color}"/>')
    return _frame(title, "MCS index", "probability", body, names)
