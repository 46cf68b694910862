"""Figure emission. Every chart is rendered to a PNG next to a plain-text
data file carrying the plotted numbers, so results stay reproducible
without the image layer."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .discrepancy import CmadReport
from .sweeps import RobustnessReport
from .training import TrainHistory

log = logging.getLogger(__name__)


def emit_cmad_plot(report: CmadReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "cmad_hist_data.tsv"
    lines = ["bin_left\tbin_right\treal_density\tfake_density"]
    edges, real, fake = report.hist_edges, report.hist_real, report.hist_fake
    for i in range(len(real)):
        lines.append(f"{edges[i]!r}\t{edges[i + 1]!r}\t{real[i]!r}\t{fake[i]!r}")
    data_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    fig, ax = plt.subplots(figsize=(6, 4))
    width = [edges[i + 1] - edges[i] for i in range(len(real))]
    ax.bar(edges[:-1], real, width=width, align="edge", alpha=0.55, label="real", color="tab:blue")
    ax.bar(edges[:-1], fake, width=width, align="edge", alpha=0.55, label="fake", color="tab:red")
    ax.set_xlabel("cross-modal attention discrepancy")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    png_path = out_dir / "cmad_hist.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [png_path, data_path]


def emit_training_curves(history: TrainHistory, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "training_curves_data.tsv"
    data_path.write_text(history.to_text(), encoding="utf-8")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(history.epochs, history.train_loss, label="train loss")
    ax1.plot(history.epochs, history.val_loss, label="val loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend()
    ax2.plot(history.epochs, history.val_accuracy, label="val accuracy", color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0.0, 1.05)
    ax2.legend()
    fig.tight_layout()
    png_path = out_dir / "training_curves.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [png_path, data_path]


def emit_robustness_chart(report: RobustnessReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in report.rows if r["available"] and r["accuracy"] is not None]
    if not rows:
        log.warning("robustness report has no available rows; skipping chart")
        return []
    data_path = out_dir / "robustness_degradation_data.tsv"
    lines = ["subset\tkind\tmagnitude\taccuracy"]
    for r in rows:
        lines.append(f"{r['subset']}\t{r['kind']}\t{r['magnitude']!r}\t{r['accuracy']!r}")
    data_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    kinds = sorted({r["kind"] for r in rows if r["kind"] != "base"})
    subsets = sorted({r["subset"] for r in rows})
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(kinds)), 4))
    for subset in subsets:
        base = [r["accuracy"] for r in rows if r["subset"] == subset and r["kind"] == "base"]
        xs, ys = [], []
        for k, kind in enumerate(kinds):
            for r in rows:
                if r["subset"] == subset and r["kind"] == kind:
                    xs.append(k + 0.15 * (r["magnitude"] % 1.0))
                    ys.append(r["accuracy"])
        ax.plot(xs, ys, marker="o", linestyle="-", label=subset, alpha=0.8)
        if base:
            ax.axhline(base[0], linestyle="--", alpha=0.3)
    ax.set_xticks(range(len(kinds)))
    ax.set_xticklabels(kinds, rotation=30, ha="right")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    png_path = out_dir / "robustness_degradation.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [png_path, data_path]
