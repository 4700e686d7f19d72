"""Minimal SVG line charts of policy entropy against training step.

The writer emits fixed-precision coordinates in a fixed element order, so the
same inputs always produce the same bytes.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .trainer import read_metrics_csv

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 150, 20, 45


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(round(v, 10)) for v in np.arange(start, hi + step * 1e-9, step)]


def entropy_chart(series: list[tuple[str, np.ndarray, np.ndarray]], title: str = "policy entropy",
                  y_name: str = "policy_entropy") -> str:
    """``series`` is a list of ``(label, steps, values)``; returns SVG text."""
    if not series:
        raise ValueError("nothing to plot: no series given")
    x_max = max(float(np.max(x)) for _, x, _ in series if len(x)) if any(len(x) for _, x, _ in series) else 1.0
    y_max = max([float(np.max(y)) for _, _, y in series if len(y)] + [1e-9])
    x_max = max(x_max, 1.0)
    y_ticks = _nice_ticks(0.0, y_max)
    y_top = max(y_ticks[-1], y_max)
    x_ticks = _nice_ticks(0.0, x_max)
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(v):
        return LEFT + pw * v / x_max

    def sy(v):
        return TOP + ph * (1.0 - v / y_top)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{LEFT + pw / 2:.1f}" y="14" text-anchor="middle">{escape(title)}</text>']
    for t in y_ticks:
        y = sy(t)
        out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y + 4:.2f}" text-anchor="end">{t:g}</text>')
    for t in x_ticks:
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 16}" text-anchor="middle">{t:g}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 8}" text-anchor="middle">step</text>')
    out.append(f'<text x="14" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {TOP + ph / 2:.1f})">{escape(y_name)}</text>')
    for i, (label, x, y) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(float(a)):.2f},{sy(float(b)):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 12 + 16 * i
        lx = LEFT + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def default_label(path: Path) -> str:
    """``runs/sweep/j3/seed0/metrics.csv`` -> ``j3/seed0``; a bare file -> its stem."""
    path = Path(path)
    if path.stem == "metrics":
        parts = path.parent.parts[-2:]
        return "/".join(parts) if parts else path.stem
    return path.stem


def plot_csvs(csv_paths, output_path, labels=None) -> Path:
    """Read metrics CSVs and write one entropy chart. Raises ValueError on schema mismatch."""
    csv_paths = [Path(p) for p in csv_paths]
    if not csv_paths:
        raise ValueError("no CSV files given")
    if labels is not None and len(labels) != len(csv_paths):
        raise ValueError(f"{len(labels)} labels for {len(csv_paths)} CSV files")
    series = []
    for i, p in enumerate(csv_paths):
        recs = read_metrics_csv(p)
        label = labels[i] if labels is not None else default_label(p)
        series.append((label, np.array([r.step for r in recs]), np.array([r.policy_entropy for r in recs])))
    output_path = Path(output_path)
    output_path.write_text(entropy_chart(series))
    return output_path
