"""
Supply-curve figures.
"""

from __future__ import annotations

from collections.abc import Sequence

import matplotlib as mpl
from matplotlib.figure import Figure

from sosim.scenario import SupplyCurve

__all__ = ["plot_supply_curves"]

_STYLE = {
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def _xy(steps: Sequence[tuple[float, float]]) -> tuple[list[float], list[float]]:
    # Each step covers (previous quantity, quantity]; start the trace at zero.
    xs = [0.0] + [q for q, _ in steps]
    ys = [steps[0][1]] + [c for _, c in steps] if steps else [0.0]
    return xs, ys


def plot_supply_curves(
    curves: Sequence[SupplyCurve],
    demand_curve: Sequence[tuple[float, float]] | None = None,
    title: str | None = None,
) -> Figure:
    """
    One step trace per curve, cost against cumulative quantity served.

    `demand_curve` holds (quantity, price) steps and is drawn dashed on top.
    Built on a bare Figure (no pyplot state) so it is safe to call from worker threads.
    """
    with mpl.rc_context(_STYLE):
        fig = Figure(figsize=(7, 4.5), layout="constrained")
        ax = fig.add_subplot()
        for curve in curves:
            if not curve.steps:
                continue
            xs, ys = _xy(curve.steps)
            ax.step(xs, ys, where="pre", label=curve.name or None)
        if demand_curve:
            xs, ys = _xy(sorted(demand_curve))
            ax.step(xs, ys, where="pre", linestyle="--", color="black", label="willingness to pay")
        ax.set_xlabel("cumulative quantity served")
        ax.set_ylabel("unit cost")
        ax.set_xlim(left=0)
        if title:
            ax.set_title(title)
        if any(curve.name for curve in curves) or demand_curve:
            ax.legend()
    return fig
