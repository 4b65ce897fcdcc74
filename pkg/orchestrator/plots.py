"""SVG line plots of reduced trajectories v(t) with sign-change markers."""

import io
import logging
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "oscillation-checker"


def line_plot_svg(
    t: np.ndarray,
    v: np.ndarray,
    crossings: Sequence[float] = (),
    title: str = "",
    ylabel: str = "v(t)",
) -> str:
    """Render v(t) as an SVG document, marking each crossing on the axis."""
    fig, ax = plt.subplots(figsize=(8, 4))
    try:
        ax.plot(t, v, linewidth=1.2)
        ax.axhline(0.0, color="0.6", linewidth=0.8)
        if len(crossings):
            ax.plot(crossings, np.zeros(len(crossings)), "o", color="tab:red", markersize=4, label="sign change")
            ax.legend(loc="best")
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True)

        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        return buffer.getvalue()
    finally:
        plt.close(fig)

