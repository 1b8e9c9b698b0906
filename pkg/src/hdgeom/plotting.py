"""Static SVG figures of vector maps and fitting traces.

Figures are drawn on an object-oriented ``Figure`` (no pyplot state) under a
fixed rc context, with a constant SVG hash salt and no date metadata, so the
same input always produces the same bytes.
"""

from __future__ import annotations

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from matplotlib.lines import Line2D
from matplotlib.patches import Polygon, Rectangle

from .evaluation import meter_scale
from .geometry import Category, VectorMap

COLORS = {
    Category.DIVIDER: "#ff8c00",
    Category.PED_CROSSING: "#1f77b4",
    Category.BOUNDARY: "#2ca02c",
}

STYLE = {
    "svg.hashsalt": "hdgeom",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.5,
    "path.simplify": False,
}

SVG_METADATA = {"Date": None, "Creator": None}


def _save(fig: Figure, path):
    try:
        with open(path, "wb") as fh:
            FigureCanvasSVG(fig).print_svg(fh, metadata=SVG_METADATA)
    except OSError as exc:
        raise OSError(f"cannot write figure to {path}: {exc}") from exc


def render(m: VectorMap, path, title: str | None = None, show_points: bool = False):
    """Draw every instance in meters, colored by category, inside the BEV extent box."""
    half_x, half_y = m.bev_extent
    scale = meter_scale(m.bev_extent)
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(4.0, 4.0 * half_y / half_x))
        ax = fig.add_subplot(1, 1, 1)
        box = Rectangle((-half_x, -half_y), 2 * half_x, 2 * half_y, fill=False,
                        edgecolor="black", linewidth=1.0)
        box.set_gid("extent")
        ax.add_patch(box)
        seen = []
        for i, inst in enumerate(m.instances):
            pts = inst.polyline.points * scale - scale / 2
            color = COLORS[inst.category]
            if inst.polyline.closed:
                artist = Polygon(pts, closed=True, fill=False, edgecolor=color)
                ax.add_patch(artist)
            else:
                artist = Line2D(pts[:, 0], pts[:, 1], color=color)
                ax.add_line(artist)
            artist.set_gid(f"instance-{i}-{inst.category.value}")
            if show_points:
                ax.plot(pts[:, 0], pts[:, 1], ".", color=color, markersize=2)
            if inst.category not in seen:
                seen.append(inst.category)
        if seen:
            handles = [Line2D([], [], color=COLORS[c], label=c.value) for c in Category if c in seen]
            ax.legend(handles=handles, loc="upper right", frameon=False)
        ax.set_xlim(-half_x * 1.05, half_x * 1.05)
        ax.set_ylim(-half_y * 1.05, half_y * 1.05)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def render_trace(trace, path, columns=("total", "pts", "euc")):
    """Loss components (log scale) and Chamfer mAP against iteration."""
    its = trace.column("iter")
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(6.0, 3.0))
        ax_loss, ax_map = fig.subplots(1, 2)
        for name in columns:
            values = abs(trace.column(name))
            ax_loss.plot(its, values, label=name)
        ax_loss.set_yscale("symlog", linthresh=1e-6)
        ax_loss.set_xlabel("iteration")
        ax_loss.set_ylabel("loss")
        ax_loss.legend(frameon=False)
        ax_map.plot(its, trace.column("mAP"), color="black")
        ax_map.set_ylim(-0.02, 1.02)
        ax_map.set_xlabel("iteration")
        ax_map.set_ylabel("Chamfer mAP")
        fig.tight_layout()
        _save(fig, path)
