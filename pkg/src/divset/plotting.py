"""Deterministic SVG scatter of the quality-diversity front.

Reads qd.csv and draws one marker per (strategy, alpha, n, l0) group at
the across-seed mean, with cross whiskers of 1.96 standard errors where
a group has more than one seed. Color encodes alpha, marker shape
encodes set size. The SVG is assembled from strings with fixed float
formatting, so the same CSV always produces the same bytes.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

__all__ = ["plot_qd"]

_PALETTE = [
    "#0072b2",
    "#d55e00",
    "#009e73",
    "#cc79a7",
    "#e69f00",
    "#56b4e9",
    "#844196",
    "#333333",
]
_MARKERS = ["circle", "square", "triangle", "diamond", "plus"]

_WIDTH, _HEIGHT = 640.0, 440.0
_LEFT, _RIGHT, _TOP, _BOTTOM = 64.0, 172.0, 24.0, 48.0
_R = 4.0  # marker radius


def _fmt(x: float) -> str:
    return "%.6g" % x


def _mean_se(values: list[float]) -> tuple[float, float]:
    k = len(values)
    mean = sum(values) / k
    if k == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (k - 1)
    return mean, 1.96 * math.sqrt(var / k)


def _padded(lo: float, hi: float) -> tuple[float, float]:
    span = hi - lo
    if span == 0.0:
        span = max(abs(lo), 1.0)
    pad = 0.05 * span
    return lo - pad, hi + pad


def _marker_svg(shape: str, x: float, y: float, color: str) -> str:
    r = _R
    f, (X, Y) = _fmt, (x, y)
    if shape == "circle":
        return f'<circle cx="{f(X)}" cy="{f(Y)}" r="{f(r)}" fill="{color}"/>'
    if shape == "square":
        return (
            f'<rect x="{f(X - r)}" y="{f(Y - r)}" width="{f(2 * r)}" '
            f'height="{f(2 * r)}" fill="{color}"/>'
        )
    if shape == "triangle":
        pts = f"{f(X)},{f(Y - r)} {f(X - r)},{f(Y + r)} {f(X + r)},{f(Y + r)}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    if shape == "diamond":
        pts = f"{f(X)},{f(Y - r)} {f(X + r)},{f(Y)} {f(X)},{f(Y + r)} {f(X - r)},{f(Y)}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    return (
        f'<path d="M {f(X - r)} {f(Y)} H {f(X + r)} M {f(X)} {f(Y - r)} V {f(Y + r)}" '
        f'stroke="{color}" stroke-width="2" fill="none"/>'
    )


def _line(x1, y1, x2, y2, color, width=1.0, dash="") -> str:
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
        f'stroke="{color}" stroke-width="{_fmt(width)}"{d}/>'
    )


def _text(x, y, s, size=11.0, anchor="middle", color="#333333") -> str:
    return (
        f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{_fmt(size)}" '
        f'font-family="sans-serif" text-anchor="{anchor}" fill="{color}">{s}</text>'
    )


def plot_qd(qd_csv: str | Path, out_path: str | Path) -> Path:
    """Render qd.csv to an SVG file; returns the output path."""
    with Path(qd_csv).open(newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{qd_csv} has no data rows")

    groups: dict[tuple, list[tuple[float, float]]] = {}
    for row in rows:
        key = (row["strategy"], float(row["alpha"]), int(row["n"]), float(row["l0"]))
        groups.setdefault(key, []).append(
            (float(row["diversity_score"]), float(row["extrinsic_value_mean"]))
        )

    alphas = sorted({k[1] for k in groups})
    sizes = sorted({k[2] for k in groups})
    color_of = {a: _PALETTE[i % len(_PALETTE)] for i, a in enumerate(alphas)}
    marker_of = {n: _MARKERS[i % len(_MARKERS)] for i, n in enumerate(sizes)}

    stats = []
    for key in sorted(groups):
        xs = [p[0] for p in groups[key]]
        ys = [p[1] for p in groups[key]]
        (mx, sx), (my, sy) = _mean_se(xs), _mean_se(ys)
        stats.append((key, mx, my, sx, sy))

    x_lo, x_hi = _padded(
        min(s[1] - s[3] for s in stats), max(s[1] + s[3] for s in stats)
    )
    y_lo, y_hi = _padded(
        min(s[2] - s[4] for s in stats), max(s[2] + s[4] for s in stats)
    )
    plot_w = _WIDTH - _LEFT - _RIGHT
    plot_h = _HEIGHT - _TOP - _BOTTOM

    def px(x: float) -> float:
        return _LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return _TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(_WIDTH)}" '
        f'height="{_fmt(_HEIGHT)}" viewBox="0 0 {_fmt(_WIDTH)} {_fmt(_HEIGHT)}">',
        f'<rect width="{_fmt(_WIDTH)}" height="{_fmt(_HEIGHT)}" fill="white"/>',
    ]
    # axes, ticks, grid
    parts.append(_line(_LEFT, _TOP, _LEFT, _TOP + plot_h, "#333333"))
    parts.append(_line(_LEFT, _TOP + plot_h, _LEFT + plot_w, _TOP + plot_h, "#333333"))
    for i in range(5):
        tx = x_lo + i * (x_hi - x_lo) / 4.0
        ty = y_lo + i * (y_hi - y_lo) / 4.0
        parts.append(_line(px(tx), _TOP, px(tx), _TOP + plot_h, "#dddddd", dash="2,3"))
        parts.append(_line(_LEFT, py(ty), _LEFT + plot_w, py(ty), "#dddddd", dash="2,3"))
        parts.append(_line(px(tx), _TOP + plot_h, px(tx), _TOP + plot_h + 4, "#333333"))
        parts.append(_line(_LEFT - 4, py(ty), _LEFT, py(ty), "#333333"))
        parts.append(_text(px(tx), _TOP + plot_h + 16, "%.4g" % tx))
        parts.append(_text(_LEFT - 7, py(ty) + 4, "%.4g" % ty, anchor="end"))
    parts.append(_text(_LEFT + plot_w / 2, _HEIGHT - 10, "diversity score (mean nearest-neighbour distance)"))
    parts.append(
        f'<text x="{_fmt(16.0)}" y="{_fmt(_TOP + plot_h / 2)}" font-size="11" '
        f'font-family="sans-serif" text-anchor="middle" fill="#333333" '
        f'transform="rotate(-90 {_fmt(16.0)} {_fmt(_TOP + plot_h / 2)})">'
        "mean extrinsic value</text>"
    )
    # whiskers under markers
    for (_, alpha, n, _), mx, my, sx, sy in stats:
        color = color_of[alpha]
        if sx > 0.0:
            parts.append(_line(px(mx - sx), py(my), px(mx + sx), py(my), color))
        if sy > 0.0:
            parts.append(_line(px(mx), py(my - sy), px(mx), py(my + sy), color))
    for (_, alpha, n, _), mx, my, _, _ in stats:
        parts.append(_marker_svg(marker_of[n], px(mx), py(my), color_of[alpha]))
    # legend
    lx = _LEFT + plot_w + 18.0
    ly = _TOP + 8.0
    for a in alphas:
        parts.append(_marker_svg("circle", lx, ly - 3.0, color_of[a]))
        parts.append(_text(lx + 10.0, ly, f"alpha={a:g}", anchor="start"))
        ly += 18.0
    ly += 6.0
    for n in sizes:
        parts.append(_marker_svg(marker_of[n], lx, ly - 3.0, "#666666"))
        parts.append(_text(lx + 10.0, ly, f"n={n}", anchor="start"))
        ly += 18.0
    parts.append("</svg>")

    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(parts) + "\n")
    return out
