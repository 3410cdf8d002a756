from __future__ import annotations

import os
from collections.abc import Sequence
from pathlib import Path

from contagion_lab.errors import ConfigError
from contagion_lab.experiment import Histogram, SweepResult
from contagion_lab.risk import StressBand


def _pyplot():
    try:
        import matplotlib as mpl
    except ImportError:
        msg = "--plot needs matplotlib: pip install 'contagion-lab[plot]'"
        raise ConfigError(msg) from None
    mpl.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _band(ax, x, mean, lo, hi, label: str) -> None:
    (line,) = ax.plot(x, mean, marker="o", label=f"{label} mean")
    ax.fill_between(x, lo, hi, alpha=0.2, color=line.get_color())


def plot_sweep(sweep: SweepResult, directory: str | os.PathLike[str]) -> list[Path]:
    "One band chart per node: mean with min-max envelope over decay steps."
    plt = _pyplot()
    directory = Path(directory)
    rows = sweep.aggregates()
    paths = []
    for node in sweep.nodes:
        fig, ax = plt.subplots(figsize=(6, 4))
        for algorithm in sweep.algorithms:
            cells = [r for r in rows if r.node == node and r.algorithm == algorithm]
            _band(
                ax,
                [r.step for r in cells],
                [r.mean for r in cells],
                [r.min for r in cells],
                [r.max for r in cells],
                algorithm,
            )
        ax.set_xlabel("step")
        ax.set_ylabel("impact fraction")
        ax.set_title(f"node {node}")
        ax.legend()
        path = directory / f"node_{node}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_stress(bands: Sequence[StressBand], path: str | os.PathLike[str]) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    _band(
        ax,
        [b.level for b in bands],
        [b.mean for b in bands],
        [b.min for b in bands],
        [b.max for b in bands],
        "debtrank",
    )
    ax.set_xlabel("shock level")
    ax.set_ylabel("impact fraction")
    ax.legend()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_histogram(hist: Histogram, path: str | os.PathLike[str], title: str = "") -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = hist.bin_edges
    ax.bar(edges[:-1], hist.counts, width=edges[1:] - edges[:-1], align="edge", edgecolor="black")
    ax.set_xlabel("loss fraction")
    ax.set_ylabel("frequency")
    if title:
        ax.set_title(title)
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
