"""Reward curves as SVG."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence


def _read(path) -> tuple:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return rows, (rows[0].keys() if rows else ())


def plot_curves(paths: Sequence, out, title: str = "") -> Path:
    """Plot summary files (median with a min-max band) or per-seed metrics (episode reward)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for path in paths:
        rows, fields = _read(path)
        label = Path(path).parent.name or str(path)
        if "median" in fields:
            bins = [r for r in rows if r["bin"] != "eval"]
            x = [int(r["end"]) for r in bins]
            ax.plot(x, [float(r["median"]) for r in bins], marker="o", label=label)
            ax.fill_between(x, [float(r["min"]) for r in bins], [float(r["max"]) for r in bins], alpha=0.2)
            ax.set_ylabel("reward fraction")
        elif "fraction" in fields and "episode" in fields:
            ax.plot([int(r["step"]) for r in rows], [float(r["fraction"]) for r in rows], lw=0.6,
                    label=label)
            ax.set_ylabel("episode reward fraction")
        elif "reward" in fields:
            ax.plot([int(r["step"]) for r in rows], [float(r["reward"]) for r in rows], lw=0.6, label=label)
            ax.set_ylabel("episode reward")
        else:
            raise ValueError(f"{path}: no plottable columns")
    ax.set_xlabel("learner steps")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the file byte-stable across runs
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
