"""Emit standalone plotting scripts for experiment directories.

The scripts import matplotlib themselves; this package never does.
"""
from __future__ import annotations

from pathlib import Path
from typing import List

from ..errors import MissingData

__all__ = ["emit_plots"]

_HEADER = '''"""Generated plotting script: log-scale stationarity and consensus error vs iteration."""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
SERIES = {series!r}


def load(path):
    iters, stat, cons = [], [], []
    with open(HERE / path, newline="") as fh:
        for row in csv.DictReader(fh):
            iters.append(int(row["iter"]))
            stat.append(float(row["stationarity"]))
            cons.append(float(row["consensus"]))
    return iters, stat, cons


def main(out="{stem}.png"):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for label, path in SERIES:
        it, st, co = load(path)
        ax1.semilogy(it, st, label=label)
        ax2.semilogy(it, co, label=label)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("stationarity error")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("consensus error")
    ax1.legend()
    fig.tight_layout()
    fig.savefig(HERE / out, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:])
'''


def _series(directory: Path):
    """``(label, relative path)`` pairs for mean curves, or sweep overlays."""
    mean = sorted(directory.glob("mean_*.csv"))
    if mean:
        return [(p.stem[len("mean_"):], p.name) for p in mean]
    out = []
    for sub in sorted(p for p in directory.glob("sweep_*") if p.is_dir()):
        for p in sorted(sub.glob("mean_*.csv")):
            label = f"{sub.name[len('sweep_'):]} {p.stem[len('mean_'):]}"
            out.append((label, f"{sub.name}/{p.name}"))
    return out


def emit_plots(directory) -> List[Path]:
    """Write ``plot_errors.py`` into ``directory``; raises :class:`MissingData` if no curves exist."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingData(f"{directory} is not a directory")
    series = _series(directory)
    if not series:
        raise MissingData(f"no mean_*.csv curves under {directory}")
    script = directory / "plot_errors.py"
    script.write_text(_HEADER.format(series=series, stem="errors"))
    return [script]
