"""Figure rendering for evaluation reports.

Curves computed by the evaluation kit are written both as delimited text
and, through here, as PNG figures next to them.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from saltrack.evalkit import EvalCurve


def plot_success(curve: EvalCurve, path, label: str = "tracker") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(curve.thresholds, curve.rates, lw=2,
            label=f"{label} [AUC {curve.summary:.3f}]")
    ax.set_xlabel("overlap threshold")
    ax.set_ylabel("success rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_precision(curve: EvalCurve, path, label: str = "tracker") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(curve.thresholds, curve.rates, lw=2,
            label=f"{label} [prec@20 {curve.summary:.3f}]")
    ax.set_xlabel("center error threshold (px)")
    ax.set_ylabel("precision")
    ax.set_xlim(0, curve.thresholds[-1])
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
