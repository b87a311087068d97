"""PNG figures next to the CSV outputs: estimate scatters and objective histories."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "figure.figsize": (4.2, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}
# no timestamps or version strings, so identical data gives identical files
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_scatter(path, truth, estimate, xlabel, ylabel, title=""):
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.scatter(truth, estimate, s=9, alpha=0.6, color="tab:blue", edgecolors="none")
        hi = float(max(truth.max(initial=0.0), estimate.max(initial=0.0))) or 1.0
        ax.plot([0, hi], [0, hi], color="0.3", lw=0.8, ls="--")
        ax.set_xlim(0, hi * 1.05)
        ax.set_ylim(0, hi * 1.05)
        ax.set_aspect("equal")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_history(path, history, title=""):
    """Objective value per iteration against cumulative true evaluations."""
    records = history.records
    with plt.rc_context(_STYLE | {"figure.figsize": (4.8, 3.4)}):
        fig, ax = plt.subplots()
        true = [r for r in records if r.true_eval]
        surrogate = [r for r in records if not r.true_eval]
        if surrogate:
            ax.plot([r.tau for r in surrogate], [r.F for r in surrogate], "o-", ms=3, lw=1,
                    color="tab:orange", label="surrogate F")
            ax.plot([r.tau for r in true], [r.F for r in true], "s", ms=5, color="tab:blue", label="simulated F")
            ax.set_xlabel("basin-hopping iteration")
            ax.legend(frameon=False)
        else:
            ax.plot([r.of_evals for r in true], [r.F for r in true], "-", lw=1.2, color="tab:blue")
            ax.set_xlabel("true objective evaluations")
        ax.set_ylabel("F")
        if title:
            ax.set_title(title)
        return _save(fig, path)
