"""PNG renderings of a run's plot-ready CSV series.

Only used by ``report --figures``; the CSV files remain the primary output.
"""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
}


def read_columns(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(head)}


def _save(fig, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_envelope(series, threshold, title, path, ensemble=None):
    """Mean separation with the 2-sigma band against the threshold."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        t = series["t"]
        ax.fill_between(t, series["lower"] / 1e3, series["upper"] / 1e3, alpha=0.25, label="mean +/- 2 sigma")
        ax.plot(t, series["mean"] / 1e3, lw=1.4, label="mean")
        if ensemble is not None:
            ax.plot(ensemble["t"], ensemble["p05"] / 1e3, "k:", lw=0.8, label="members 5-95%")
            ax.plot(ensemble["t"], ensemble["p95"] / 1e3, "k:", lw=0.8)
        ax.axhline(threshold / 1e3, color="tab:red", lw=1, ls="--", label="threshold")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("separation (km)")
        ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_pdf(series, threshold, title, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(series["distance"] / 1e3, series["density"] * 1e3)
        ax.axvline(threshold / 1e3, color="tab:red", lw=1, ls="--")
        ax.set_xlabel("separation (km)")
        ax.set_ylabel("density (1/km)")
        ax.set_title(title)
        return _save(fig, path)


def plot_joint(series, title, path):
    """Joint PDF and joint CDF side by side."""
    x = np.unique(series["d_t1"])
    y = np.unique(series["d_t2"])
    shape = (x.size, y.size)
    with plt.rc_context({**STYLE, "figure.figsize": (9.6, 4.0), "axes.grid": False}):
        fig, axes = plt.subplots(1, 2)
        for ax, name in zip(axes, ("pdf", "cdf")):
            cs = ax.contourf(x / 1e3, y / 1e3, series[name].reshape(shape).T, levels=20)
            fig.colorbar(cs, ax=ax)
            ax.set_xlabel("separation at t1 (km)")
            ax.set_ylabel("separation at t2 (km)")
            ax.set_title(f"{title}: joint {name.upper()}")
        fig.tight_layout()
        return _save(fig, path)


def render_run(run_dir, report):
    """Render every series referenced by ``report``; returns the PNG paths."""
    root = Path(run_dir)
    out = []
    for rec in report["pairs"]:
        files = rec.get("files") or {}
        if "envelope" not in files:
            continue
        key = "-".join(rec["pair"])
        ens = read_columns(root / files["ensemble"]) if "ensemble" in files else None
        out.append(plot_envelope(read_columns(root / files["envelope"]), report["threshold_m"],
                                 f"{key} separation", root / "figures" / f"envelope_{key}.png", ens))
        for rel in files.get("pdf", []):
            name = Path(rel).stem
            out.append(plot_pdf(read_columns(root / rel), report["threshold_m"], name,
                                root / "figures" / f"{name}.png"))
        if "joint" in files:
            name = Path(files["joint"]).stem
            out.append(plot_joint(read_columns(root / files["joint"]), key, root / "figures" / f"{name}.png"))
    return out
