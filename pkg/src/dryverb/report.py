"""Report rendering: delimited metric tables plus matplotlib figures on disk."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .audio import ComplexSpectrogram
from .bench import BenchmarkReport, render_csv, render_summary


def save_spectrogram_figure(spec: ComplexSpectrogram, path: str,
                            title: str = "spectrogram",
                            floor_db: float = -80.0) -> str:
    """Magnitude spectrogram in dB, written to ``path``."""
    mags = np.abs(spec.coefficients).T
    db = 20.0 * np.log10(np.maximum(mags, 1e-12))
    db = np.maximum(db - db.max(), floor_db)
    extent = (0.0, spec.n_samples / spec.sample_rate,
              0.0, spec.sample_rate / 2.0 / 1000.0)
    fig, ax = plt.subplots(figsize=(8, 4))
    im = ax.imshow(db, origin="lower", aspect="auto", extent=extent, cmap="magma")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("frequency [kHz]")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="dB")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_comparison_figure(specs: dict[str, ComplexSpectrogram], path: str,
                           floor_db: float = -80.0) -> str:
    """Stacked spectrogram panels, one per labelled estimate."""
    n = len(specs)
    if n == 0:
        raise ValueError("nothing to plot")
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.6 * n), squeeze=False)
    for ax, (label, spec) in zip(axes[:, 0], specs.items()):
        mags = np.abs(spec.coefficients).T
        db = 20.0 * np.log10(np.maximum(mags, 1e-12))
        db = np.maximum(db - db.max(), floor_db)
        extent = (0.0, spec.n_samples / spec.sample_rate,
                  0.0, spec.sample_rate / 2.0 / 1000.0)
        im = ax.imshow(db, origin="lower", aspect="auto", extent=extent, cmap="magma")
        ax.set_ylabel("kHz")
        ax.set_title(label, fontsize=9)
        fig.colorbar(im, ax=ax, label="dB")
    axes[-1, 0].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_metric_figure(report: BenchmarkReport, path: str,
                       metric: str = "l1") -> str:
    """Bar chart of per-method mean with a std whisker."""
    stats = report.mean_std(metric)
    methods = [m for m in report.methods if m in stats]
    means = [stats[m][0] for m in methods]
    stds = [stats[m][1] for m in methods]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.bar(range(len(methods)), means, yerr=stds, capsize=4, color="#4878cf")
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, rotation=20, ha="right")
    ax.set_ylabel(metric)
    ax.set_title(f"benchmark: {metric} per method (mean over clips)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_report(report: BenchmarkReport, out_dir: str) -> dict[str, str]:
    """Write the CSV, text summary, and metric figures into ``out_dir``.
    Returns a mapping from artifact name to path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    csv_path = os.path.join(out_dir, "metrics.csv")
    with open(csv_path, "w") as fh:
        fh.write(render_csv(report))
    paths["csv"] = csv_path

    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w") as fh:
        fh.write(render_summary(report))
    paths["summary"] = summary_path

    for metric in ("l1", "lsd"):
        fig_path = os.path.join(out_dir, f"{metric}_by_method.png")
        save_metric_figure(report, fig_path, metric)
        paths[f"figure_{metric}"] = fig_path
    return paths
