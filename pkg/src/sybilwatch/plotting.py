"""Figures for topology reports.  Rendered off-screen to image files."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _new(width=4.5, height=3.0):
    return plt.subplots(figsize=(width, height), constrained_layout=True)


def component_sizes(rep):
    sizes = Counter(c.size for c in rep.components)
    fig, ax = _new()
    xs = sorted(sizes)
    ax.bar(range(len(xs)), [sizes[x] for x in xs], color="0.35")
    ax.set_xticks(range(len(xs)), [str(x) for x in xs])
    ax.set_yscale("log")
    ax.set_xlabel("Sybil component size")
    ax.set_ylabel("components")
    ax.set_title(f"isolated fraction {rep.isolated_fraction:.3f}" if rep.isolated_fraction is not None else "no Sybils")
    return fig


def density_vs_size(rep, loose_density=None):
    comps = rep.non_trivial()
    fig, ax = _new()
    ax.scatter([c.size for c in comps], [c.density for c in comps], s=14, color="0.2")
    if comps:
        top = max(c.size for c in comps)
        xs = list(range(2, top + 1))
        ax.plot(xs, [2 / n for n in xs], lw=0.8, ls="--", color="0.5", label="tree (2/n)")
        ax.legend(frameon=False)
    if loose_density is not None:
        ax.axhline(loose_density, lw=0.8, color="tab:red")
    ax.set_xscale("log")
    ax.set_xlabel("component size")
    ax.set_ylabel("density")
    return fig


def edge_time_gaps(rep):
    fig, ax = _new()
    if rep.edge_time_gaps:
        hours, counts = zip(*rep.edge_time_gaps)
        ax.bar(hours, counts, width=1.0, align="edge", color="0.35")
    ax.set_xlabel("hours from later account creation to edge")
    ax.set_ylabel("Sybil-Sybil edges")
    return fig


def save_report_figures(rep, out_dir, fmt="png", loose_density=None) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context(RC):
        for name, make in (
            ("component_sizes", lambda: component_sizes(rep)),
            ("density_vs_size", lambda: density_vs_size(rep, loose_density)),
            ("edge_time_gaps", lambda: edge_time_gaps(rep)),
        ):
            fig = make()
            path = out_dir / f"{name}.{fmt}"
            fig.savefig(path)
            plt.close(fig)
            paths.append(path)
    return paths
