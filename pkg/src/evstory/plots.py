"""Rendering of metric reports: per-sentence-index CSVs and PNG curves."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # headless backend; must precede pyplot import
import matplotlib.pyplot as plt

from .metrics import IntraCurve, MetricReport


def write_curve_csv(curve: IntraCurve, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sentence_index", "value"])
        for index, value in sorted(curve.by_index.items()):
            writer.writerow([index, f"{value:.6f}"])
        writer.writerow(["aggregate", f"{curve.aggregate:.6f}"])
    return path


def plot_curve(curve: IntraCurve, title: str, ylabel: str, path: Path) -> Path:
    indices = sorted(curve.by_index)
    values = [curve.by_index[i] for i in indices]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(indices, values, marker="o")
    ax.axhline(curve.aggregate, linestyle="--", linewidth=1, label="aggregate")
    ax.set_xlabel("sentence index")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if indices:
        ax.set_xticks(indices)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report(report: MetricReport, out_dir: Path) -> list[Path]:
    """Writes one CSV and one PNG per intra-story curve; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    labels = {
        "repetition": "trigram repetition ratio",
        "coherence": "cosine to previous sentence",
        "relevance": "cosine to leading context",
    }
    for name, curve in report.intra.items():
        written.append(write_curve_csv(curve, out_dir / f"{name}.csv"))
        written.append(
            plot_curve(
                curve,
                title=f"intra-story {name}",
                ylabel=labels.get(name, name),
                path=out_dir / f"{name}.png",
            )
        )
    return written
