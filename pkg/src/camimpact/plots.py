"""Minimal SVG scatter plots of diagram CSV files."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "camimpact"

KINDS = {
    "impact_diagram": ("omega_rpm", "phase_rad", "cam speed (rpm)", "impact phase (rad)"),
    "strobe_diagram": ("omega_rpm", "q", "cam speed (rpm)", "q at strobe (m)"),
    "local_diagram": ("delta_T", "value", "delta T (s)", "delta x1"),
}


def detect_kind(header: list) -> str:
    for kind, (xcol, ycol, _, _) in KINDS.items():
        if xcol in header and ycol in header:
            return kind
    raise ValueError(f"unrecognised diagram columns: {header}")


def render_svg(csv_path, svg_path, corner_phases=None, title: str | None = None) -> Path:
    """Scatter plot of a diagram CSV.

    Impact diagrams get dotted horizontal rules at ``corner_phases``.
    """
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    kind = detect_kind(header)
    xcol, ycol, xlabel, ylabel = KINDS[kind]
    ix, iy = header.index(xcol), header.index(ycol)
    xs, ys = [], []
    for row in rows:
        try:
            x, y = float(row[ix]), float(row[iy])
        except ValueError:
            continue
        xs.append(x)
        ys.append(y)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.scatter(xs, ys, s=1.5, c="k", linewidths=0)
    if kind == "impact_diagram" and corner_phases:
        for ph in corner_phases:
            ax.axhline(ph, ls=":", lw=0.8, c="0.4")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    out = Path(svg_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
