"""Standalone SVG emission for reports: no plotting dependency, diff-able output.

Every chart embeds its data table as an XML comment so the numbers survive
without the picture.
"""

from __future__ import annotations

from typing import Sequence

_SVG_HEADER = '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">'
_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3")


def _data_comment(rows: Sequence[Sequence]) -> str:
    body = "\n".join(",".join(str(c) for c in row) for row in rows)
    return f"<!-- data:\n{body}\n-->"


def breakdown_bars(shares_by_metric: dict, title: str) -> str:
    """Stacked horizontal bars, one per metric, one segment per component."""
    metrics = list(shares_by_metric)
    components = list(next(iter(shares_by_metric.values())))
    width, bar_h, left = 640, 34, 110
    height = 70 + bar_h * 2 * len(metrics)
    parts = [_SVG_HEADER.format(w=width, h=height)]
    rows = [["metric"] + components]
    parts.append(f'<text x="10" y="24" font-size="16" font-family="sans-serif">{title}</text>')
    y = 50
    for metric in metrics:
        shares = shares_by_metric[metric]
        rows.append([metric] + [f"{shares[c]:.4f}" for c in components])
        parts.append(
            f'<text x="10" y="{y + bar_h / 2 + 5}" font-size="13" font-family="sans-serif">{metric}</text>'
        )
        x = float(left)
        for i, comp in enumerate(components):
            w = shares[comp] * (width - left - 20)
            parts.append(
                f'<rect x="{x:.1f}" y="{y}" width="{w:.1f}" height="{bar_h}" '
                f'fill="{_PALETTE[i % len(_PALETTE)]}"><title>{comp}: {shares[comp]:.1%}</title></rect>'
            )
            x += w
        y += bar_h * 2
    # legend
    x = float(left)
    for i, comp in enumerate(components):
        parts.append(
            f'<rect x="{x:.1f}" y="{y - bar_h + 4}" width="12" height="12" '
            f'fill="{_PALETTE[i % len(_PALETTE)]}"/>'
            f'<text x="{x + 16:.1f}" y="{y - bar_h + 14}" font-size="12" '
            f'font-family="sans-serif">{comp}</text>'
        )
        x += 130
    parts.append(_data_comment(rows))
    parts.append("</svg>")
    return "\n".join(parts)


def scatter(xs: Sequence[float], ys: Sequence[float], labels: Sequence[str],
            x_label: str, y_label: str, title: str) -> str:
    """Labelled scatter plot with linear axes."""
    width, height, margin = 560, 420, 60
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_pad = (x_hi - x_lo) * 0.1 or 0.5
    y_pad = (y_hi - y_lo) * 0.1 or 0.01

    def sx(v):
        return margin + (v - x_lo + x_pad) / (x_hi - x_lo + 2 * x_pad) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y_lo + y_pad) / (y_hi - y_lo + 2 * y_pad) * (height - 2 * margin)

    parts = [_SVG_HEADER.format(w=width, h=height)]
    parts.append(f'<text x="14" y="24" font-size="16" font-family="sans-serif">{title}</text>')
    parts.append(
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="#333"/>'
        f'<line x1="{margin}" y1="{margin / 2 + 20}" x2="{margin}" y2="{height - margin}" stroke="#333"/>'
    )
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 14}" font-size="13" text-anchor="middle" '
        f'font-family="sans-serif">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{height / 2:.0f}" font-size="13" font-family="sans-serif" '
        f'transform="rotate(-90 16 {height / 2:.0f})" text-anchor="middle">{y_label}</text>'
    )
    for x, y, label in zip(xs, ys, labels):
        parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="5" fill="#4c72b0"/>')
        parts.append(
            f'<text x="{sx(x) + 8:.1f}" y="{sy(y) - 6:.1f}" font-size="12" '
            f'font-family="sans-serif">{label}</text>'
        )
    parts.append(_data_comment([["label", x_label, y_label]] + [
        [label, f"{x:.6g}", f"{y:.6g}"] for x, y, label in zip(xs, ys, labels)
    ]))
    parts.append("</svg>")
    return "\n".join(parts)
