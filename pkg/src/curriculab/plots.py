"""SVG renderings of the per-seed figure CSVs.

Output is byte-stable: the SVG hash salt is fixed and no creation date is
embedded.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def _read(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(header)))


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "curriculab"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def render_seed_plots(seed_dir: Path) -> list[Path]:
    plt = _figure()
    seed_dir = Path(seed_dir)
    out = []

    _, heat = _read(seed_dir / "heatmap.csv")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    im = ax.imshow(heat[:, 1:].T, aspect="auto", origin="lower", cmap="viridis", interpolation="nearest")
    ax.set_xlabel("curriculum stage")
    ax.set_ylabel("task index")
    fig.colorbar(im, ax=ax, label="sampling probability")
    out.append(seed_dir / "heatmap.svg")
    fig.savefig(out[-1], format="svg", metadata={"Date": None})
    plt.close(fig)

    _, curves = _read(seed_dir / "reward_curves.csv")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    if len(curves):
        for task in np.unique(curves[:, 1]).astype(int):
            sel = curves[:, 1] == task
            ax.plot(curves[sel, 0], curves[sel, 2], lw=0.8, label=str(task))
        if len(np.unique(curves[:, 1])) <= 10:
            ax.legend(title="task", fontsize=6, ncol=2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("episodic reward (EMA)")
    out.append(seed_dir / "reward_curves.svg")
    fig.savefig(out[-1], format="svg", metadata={"Date": None})
    plt.close(fig)

    _, rate = _read(seed_dir / "success_rate.csv")
    fig, ax = plt.subplots(figsize=(5, 3))
    if len(rate):
        ax.plot(rate[:, 0], rate[:, 1], marker="o")
    ax.set_ylim(0, 1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("success rate")
    out.append(seed_dir / "success_rate.svg")
    fig.savefig(out[-1], format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def render_logdir(logdir: Path) -> list[Path]:
    """Render every ``seed_*`` directory under a run directory."""
    logdir = Path(logdir)
    seed_dirs = sorted(p for p in logdir.glob("seed_*") if (p / "heatmap.csv").exists())
    if not seed_dirs:
        raise FileNotFoundError(f"no seed_*/heatmap.csv under {logdir}")
    paths = []
    for d in seed_dirs:
        paths += render_seed_plots(d)
    return paths
