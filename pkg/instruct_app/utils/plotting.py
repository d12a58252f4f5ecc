"""
Scatter plots of 2-D samples as SVG.

The viewport is fixed ([-4, 4] on both axes, a 288 x 288 canvas) and the
writer is made deterministic, so identical samples give identical bytes.
"""

import io
from pathlib import Path

import matplotlib
matplotlib.use('Agg')

import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from ..exceptions import ShapeMismatchError  # noqa: E402
from .checkpoints import write_atomic  # noqa: E402

VIEW_LIMIT = 4.0
FIGURE_INCHES = 4.0
DPI = 72
CANVAS_SIZE = FIGURE_INCHES * DPI

SVG_RC = {
    'svg.hashsalt': 'diff-instruct-lab',
    'svg.fonttype': 'none',
    'path.simplify': False,
}


def scatter_svg(samples, marker_size: float = 2.0, color: str = '#1f4e79') -> str:
    """SVG text for a scatter of (n, 2) samples; an empty set gives the axes alone."""
    points = np.asarray(samples, dtype=np.float64)
    if points.size == 0:
        points = points.reshape(0, 2)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ShapeMismatchError(f"Scatter plots need 2-D samples, got shape {np.shape(samples)}")

    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(FIGURE_INCHES, FIGURE_INCHES), dpi=DPI)
        ax = fig.add_axes([0.0, 0.0, 1.0, 1.0])
        ax.set_xlim(-VIEW_LIMIT, VIEW_LIMIT)
        ax.set_ylim(-VIEW_LIMIT, VIEW_LIMIT)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.axhline(0.0, color='#bbbbbb', linewidth=0.5)
        ax.axvline(0.0, color='#bbbbbb', linewidth=0.5)
        if points.shape[0]:
            ax.plot(points[:, 0], points[:, 1], linestyle='none', marker='o',
                    markersize=marker_size, markeredgewidth=0.0, color=color)
        buffer = io.StringIO()
        fig.savefig(buffer, format='svg', metadata={'Date': None})
    return buffer.getvalue()


def render_scatter(samples, path, **kwargs) -> Path:
    """Write the scatter SVG to ``path``."""
    return write_atomic(path, scatter_svg(samples, **kwargs))
