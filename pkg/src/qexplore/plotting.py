"""Figures for comparison reports (written to files, never shown)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLES = {"qicrl": "C0", "icrl": "C1", "random": "C2"}


def _color(label: str, i: int) -> str:
    return STYLES.get(label.split("#")[0], f"C{3 + i}")


def plot_curves(data: dict, out_dir, dpi: int = 110) -> list[Path]:
    """One D3C-over-steps figure per scope, mean line with a one-std band.

    ``data`` is the structure returned by :func:`qexplore.compare.read_plot_data`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for scope, curves in data.items():
        fig, ax = plt.subplots(figsize=(5.2, 3.4))
        for i, (label, rows) in enumerate(curves.items()):
            t = [r[0] for r in rows]
            mean = [r[1] for r in rows]
            lo = [r[1] - r[2] for r in rows]
            hi = [r[1] + r[2] for r in rows]
            c = _color(label, i)
            ax.plot(t, mean, color=c, label=label, lw=1.6)
            ax.fill_between(t, lo, hi, color=c, alpha=0.18, lw=0)
        ax.set_xlabel("exploration step")
        ax.set_ylabel("D3C")
        ax.set_title(f"distinct page structures ({scope})")
        ax.grid(alpha=0.3)
        ax.legend(frameon=False)
        fig.tight_layout()
        path = out_dir / f"d3c_{scope}.png"
        fig.savefig(path, dpi=dpi)
        plt.close(fig)
        written.append(path)
    return written


def plot_coverage(report: dict, out_dir, dpi: int = 110) -> Path:
    """Grouped bars of mean coverage ratio per manifest and policy."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    envs = list(report["environments"])
    labels = list(dict.fromkeys(lbl for e in envs for lbl in report["environments"][e]))
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    width = 0.8 / max(1, len(labels))
    for i, label in enumerate(labels):
        xs, ys, es = [], [], []
        for j, env in enumerate(envs):
            entry = report["environments"][env].get(label)
            if entry is None:
                continue
            xs.append(j + i * width)
            ys.append(entry["coverage"]["mean"])
            es.append(entry["coverage"]["std"])
        ax.bar(xs, ys, width, yerr=es, label=label, color=_color(label, i), capsize=2)
    ax.set_xticks([j + width * (len(labels) - 1) / 2 for j in range(len(envs))])
    ax.set_xticklabels(envs)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("coverage ratio")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = out_dir / "coverage.png"
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
