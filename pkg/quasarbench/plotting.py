"""
Optional log-log SVG plots of sweep summaries. Plots are artifacts only; no
verdict reads them.
"""

import logging
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from quasarbench.models import RateFit, SweepSummary  # noqa: E402

logger = logging.getLogger(__name__)


def plot_summary(summary: SweepSummary, path: Path, fit: Optional[RateFit] = None, title: str = "") -> Path:
    """
    Write measured means with error bars, the bound curve and the fitted line.

    Args:
        summary: Sweep summary (bound column plotted when present)
        path: Output .svg path
        fit: Optional rate fit drawn as a dashed line
        title: Figure title

    Returns:
        The written path
    """
    Ts = np.array([row.T for row in summary.rows], dtype=float)
    means = np.array([row.mean for row in summary.rows])
    errors = np.array([row.ci95 for row in summary.rows])

    fig, ax = plt.subplots(figsize=(7, 6))
    ax.errorbar(Ts, means, yerr=errors, fmt="ko", ms=6.0, capsize=3, label=f"measured {summary.statistic}")
    bounds = [row.bound for row in summary.rows]
    if all(b is not None for b in bounds) and bounds:
        ax.loglog(Ts, bounds, "b-", label="bound")
    if fit is not None:
        ax.loglog(Ts, np.exp(fit.slope * np.log(Ts) + fit.intercept), "k--", label=f"$O(T^{{{fit.slope:.2f}}})$")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.grid(True)
    ax.set_xlabel("$T$")
    ax.set_ylabel(summary.statistic)
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right")

    path = Path(path)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    logger.info(f"Wrote plot {path}")
    return path
