"""Figure rendering for the report path.

Scans an artifact directory for the known delimited tables and renders
matplotlib figures next to them.  PNG metadata is stripped so repeated runs
stay byte-identical.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SAVEFIG_KW = {"dpi": 150, "bbox_inches": "tight", "metadata": {"Software": None}}


def _read_table(path):
    sep = "," if path.suffix == ".csv" else None
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = lines[0].split(sep)
    data = np.array([[_maybe_float(v) for v in ln.split(sep)] for ln in lines[1:]])
    return header, data


def _maybe_float(text):
    try:
        return float(text)
    except ValueError:
        return np.nan


def _save(fig, path):
    fig.savefig(path, **SAVEFIG_KW)
    plt.close(fig)
    return path


def render_compare_bases(directory):
    directory = Path(directory)
    mean_path = directory / "mean_errors.csv"
    max_path = directory / "max_errors.csv"
    if not (mean_path.exists() and max_path.exists()):
        return []
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), sharey=True)
    for ax, path, title in ((axes[0], mean_path, "Mean error"),
                            (axes[1], max_path, "Max error")):
        header, data = _read_table(path)
        for j, label in enumerate(header[1:], start=1):
            ax.semilogy(data[:, 0], data[:, j], label=label)
        ax.set_xlabel("N")
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
    axes[0].set_ylabel("relative error")
    axes[0].legend(fontsize=8)
    return [_save(fig, directory / "bases_comparison.png")]


def render_toy(directory):
    directory = Path(directory)
    data_path = directory / "toy_data_points.dat"
    if not data_path.exists():
        return []
    fig, ax = plt.subplots(figsize=(6, 4.5))
    _, pts = _read_table(data_path)
    ax.plot(pts[:, 0], pts[:, 1], "ko", ms=4, label="data points")
    styles = {"toy_quadratic_homogeneous.dat": ("bx", "quadratic (homogeneous)"),
              "toy_quadratic_full.dat": ("r^", "quadratic (full)")}
    for name, (style, label) in styles.items():
        path = directory / name
        if path.exists():
            _, rec = _read_table(path)
            ax.plot(rec[:, 0], rec[:, 1], style, ms=4, label=label, mfc="none")
    ax.set_xlabel("first component")
    ax.set_ylabel("second component")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return [_save(fig, directory / "toy_reconstruction.png")]


def render_convergence(directory):
    directory = Path(directory)
    out = []
    groups = {
        "tangent_convergence": "tangent-mode distance",
        "tangent_alignment": "alignment residual",
        "curvature_filtered": "filtered curvature distance",
        "curvature_unfiltered": "unfiltered curvature distance",
        "quadratic_law": "quadratic-law residual",
        "singular_gap": "singular-value gap ratio",
    }
    for stem, ylabel in groups.items():
        paths = sorted(directory.glob(f"{stem}_p*.dat"))
        if not paths:
            continue
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for path in paths:
            header, data = _read_table(path)
            for j, label in enumerate(header[1:], start=1):
                tag = path.stem.split("_")[-1]
                name = label if len(header) > 2 else tag
                ax.loglog(data[:, 0], data[:, j], "o-", ms=4,
                          label=f"{tag} {label}" if len(header) > 2 else name)
        ax.set_xlabel("r")
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        out.append(_save(fig, directory / f"{stem}.png"))
    return out


def render_quadratic(directory):
    directory = Path(directory)
    path = directory / "quadratic_errors.csv"
    if not path.exists():
        return []
    header, data = _read_table(path)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for j, label in enumerate(header[1:], start=1):
        ax.semilogy(data[:, 0], data[:, j], "o-", ms=4, label=label)
    ax.set_xlabel("reduced dimension n")
    ax.set_ylabel("relative error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return [_save(fig, directory / "quadratic_errors.png")]


def render_all(directory):
    """Render every known figure for the tables present in the directory."""
    written = []
    for renderer in (render_compare_bases, render_toy, render_convergence,
                     render_quadratic):
        written.extend(renderer(directory))
    return written
