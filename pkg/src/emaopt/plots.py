"""Figure rendering for sweep results.

Draws the best-over-grid mean convergence curve of every algorithm, split
into a first-order and a zeroth-order panel, and writes the figures next to
the delimited output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .harness import ExperimentResult

_STYLE = {
    "FEMA1": dict(color="tab:blue"),
    "FEMA2": dict(color="tab:orange"),
    "FEMA3": dict(color="tab:green"),
    "SGD": dict(color="tab:red", linestyle="--"),
    "ZEMA1": dict(color="tab:blue"),
    "ZEMA2": dict(color="tab:orange"),
    "ZEMA3": dict(color="tab:green"),
    "ZSGD": dict(color="tab:red", linestyle="--"),
}


def render_figures(result: ExperimentResult, outdir) -> list[Path]:
    """Write first_order.png / zeroth_order.png; returns the created paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    curves = result.best_mean_curves()
    panels = [
        ("first_order.png", "First-order methods", [a for a in curves if not a.startswith("Z")]),
        ("zeroth_order.png", "Zeroth-order methods", [a for a in curves if a.startswith("Z")]),
    ]
    written = []
    for fname, title, algos in panels:
        if not algos:
            continue
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        for algo in algos:
            y = curves[algo]
            ax.semilogy(range(1, len(y) + 1), y, label=algo, **_STYLE.get(algo, {}))
        ax.set_xlabel("epoch")
        ax.set_ylabel("objective gap (best over stepsize grid, mean over repetitions)")
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = outdir / fname
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
