"""Learning-curve figures as self-contained SVG.

No plotting dependency: the figure is a few hundred fixed-precision
template substitutions, so identical results files always produce
byte-identical images (the rendering is part of the determinism
contract, same as the CSV).

Both axes are logarithmic: training-set sizes are sampled roughly
geometrically and the losses span decades.
"""

from __future__ import annotations

import math

__all__ = ["plot_curves", "render_curves"]

_WIDTH = 760.0
_HEIGHT = 480.0
_MARGIN_L = 72.0
_MARGIN_R = 18.0
_MARGIN_T = 22.0
_MARGIN_B = 56.0

_COLORS = {
    "plain_gd": "#7f7f7f",
    "oracle_gd": "#1f77b4",
    "oracle_lgd": "#2ca02c",
    "oracle_lgd_long": "#17becf",
    "meta_lgd": "#d62728",
}
_FALLBACK = ("#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#bcbd22")

_LABELS = {
    "plain_gd": "plain GD",
    "oracle_gd": "oracle GD",
    "oracle_lgd": "oracle LGD",
    "oracle_lgd_long": "oracle LGD (10x)",
    "meta_lgd": "meta LGD",
}


def _f(x: float) -> str:
    return f"{x:.2f}"


def _collect(rows: list[dict]) -> dict[str, list[dict]]:
    series: dict[str, list[dict]] = {}
    for r in rows:
        series.setdefault(r["method"], []).append(r)
    for pts in series.values():
        pts.sort(key=lambda r: r["n_train"])
    return series


def render_curves(rows: list[dict], title: str = "") -> str:
    """Render parsed results rows (method, n_train, mean_mse, stderr) to an
    SVG document string."""
    if not rows:
        raise ValueError("no rows to plot")
    series = _collect(rows)

    xs = [r["n_train"] for r in rows]
    ys = []
    for r in rows:
        if r["mean_mse"] <= 0:
            raise ValueError(
                f"method {r['method']!r} at n_train={r['n_train']} has non-positive "
                f"mean_mse {r['mean_mse']}; log-scale plots need positive losses"
            )
        ys.append(r["mean_mse"])
        ys.append(r["mean_mse"] + r["stderr"])
        lo = r["mean_mse"] - r["stderr"]
        if lo > 0:
            ys.append(lo)
    x_lo, x_hi = math.log10(min(xs)), math.log10(max(xs))
    y_lo, y_hi = math.log10(min(ys)), math.log10(max(ys))
    if x_hi - x_lo < 1e-9:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pad = 0.05 * (y_hi - y_lo) if y_hi - y_lo > 1e-9 else 0.5
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(n: float) -> float:
        return _MARGIN_L + (math.log10(n) - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: float) -> float:
        return _MARGIN_T + (y_hi - math.log10(v)) / (y_hi - y_lo) * plot_h

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_f(_WIDTH)} {_f(_HEIGHT)}" '
        f'font-family="Helvetica, Arial, sans-serif" font-size="12">'
    )
    parts.append(f'<rect width="{_f(_WIDTH)}" height="{_f(_HEIGHT)}" fill="white"/>')

    # gridlines and y ticks at decades
    for e in range(math.floor(y_lo), math.ceil(y_hi) + 1):
        v = 10.0**e
        if not (y_lo <= e <= y_hi):
            continue
        y = py(v)
        parts.append(
            f'<line x1="{_f(_MARGIN_L)}" y1="{_f(y)}" x2="{_f(_WIDTH - _MARGIN_R)}" '
            f'y2="{_f(y)}" stroke="#dddddd" stroke-width="1"/>'
        )
        label = f"1e{e}" if e not in (0, 1, -1) else ("1" if e == 0 else ("10" if e == 1 else "0.1"))
        parts.append(
            f'<text x="{_f(_MARGIN_L - 8)}" y="{_f(y + 4)}" text-anchor="end">{label}</text>'
        )

    # x ticks at the observed sizes
    for n in sorted(set(xs)):
        x = px(n)
        parts.append(
            f'<line x1="{_f(x)}" y1="{_f(_HEIGHT - _MARGIN_B)}" x2="{_f(x)}" '
            f'y2="{_f(_HEIGHT - _MARGIN_B + 5)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_f(x)}" y="{_f(_HEIGHT - _MARGIN_B + 19)}" text-anchor="middle">{n}</text>'
        )

    # frame
    parts.append(
        f'<rect x="{_f(_MARGIN_L)}" y="{_f(_MARGIN_T)}" width="{_f(plot_w)}" '
        f'height="{_f(plot_h)}" fill="none" stroke="#333333" stroke-width="1"/>'
    )

    # series
    fallback = iter(_FALLBACK * 4)
    colors: dict[str, str] = {}
    for method in series:
        colors[method] = _COLORS.get(method) or next(fallback)
    for method, pts in series.items():
        color = colors[method]
        coords = [(px(r["n_train"]), py(r["mean_mse"])) for r in pts]
        for r, (x, y) in zip(pts, coords):
            hi = r["mean_mse"] + r["stderr"]
            lo = max(r["mean_mse"] - r["stderr"], 10.0**y_lo)
            if r["stderr"] > 0:
                parts.append(
                    f'<line x1="{_f(x)}" y1="{_f(py(lo))}" x2="{_f(x)}" y2="{_f(py(hi))}" '
                    f'stroke="{color}" stroke-width="1"/>'
                )
        if len(coords) > 1:
            path = " ".join(f"{_f(x)},{_f(y)}" for x, y in coords)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>'
            )
        for x, y in coords:
            parts.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="3" fill="{color}"/>')

    # legend
    lx = _WIDTH - _MARGIN_R - 170.0
    ly = _MARGIN_T + 10.0
    parts.append(
        f'<rect x="{_f(lx - 8)}" y="{_f(ly - 14)}" width="170" '
        f'height="{_f(len(series) * 17 + 8)}" fill="white" fill-opacity="0.85" '
        f'stroke="#bbbbbb" stroke-width="0.5"/>'
    )
    for i, method in enumerate(series):
        y = ly + 17.0 * i
        parts.append(
            f'<line x1="{_f(lx)}" y1="{_f(y - 4)}" x2="{_f(lx + 22)}" y2="{_f(y - 4)}" '
            f'stroke="{colors[method]}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_f(lx + 28)}" y="{_f(y)}">{_LABELS.get(method, method)}</text>'
        )

    # axis titles
    parts.append(
        f'<text x="{_f(_MARGIN_L + plot_w / 2)}" y="{_f(_HEIGHT - 14)}" '
        f'text-anchor="middle">training samples per task</text>'
    )
    parts.append(
        f'<text x="16" y="{_f(_MARGIN_T + plot_h / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_f(_MARGIN_T + plot_h / 2)})">validation MSE</text>'
    )
    if title:
        parts.append(
            f'<text x="{_f(_MARGIN_L + plot_w / 2)}" y="{_f(_MARGIN_T - 7)}" '
            f'text-anchor="middle" font-size="13">{title}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_curves(csv_path: str, svg_path: str, title: str = "") -> None:
    """Read a results CSV and write the learning-curve figure."""
    from .harness import read_results_csv

    rows = read_results_csv(csv_path)
    svg = render_curves(rows, title=title)
    with open(svg_path, "w", encoding="utf-8") as f:
        f.write(svg)
