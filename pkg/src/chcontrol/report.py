"""Figure rendering for run outputs.

Post-processes the CSV artifacts of a run directory into PNG figures placed
alongside them. Purely read-only over the delimited outputs: solvers never
import this module.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    cols = {}
    for j, name in enumerate(header):
        vals = []
        for row in rows:
            try:
                vals.append(float(row[j]))
            except (ValueError, IndexError):
                vals.append(float("nan"))
        cols[name] = vals
    return cols


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_norms(csv_path: Path, out_path: Path):
    cols = _read_csv(csv_path)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    t = cols["t"]
    for key, label in (("norm_mu", r"$\|\mu\|$"),
                       ("norm_mu_t", r"$\|\partial_t\mu\|$"),
                       ("norm_sigma", r"$\|\sigma\|$")):
        ax1.plot(t, cols[key], label=label)
    ax1.set_xlabel("t")
    ax1.set_ylabel("norm")
    ax1.legend(fontsize=8)
    ax2.plot(t, cols["min_phi"], label=r"$\min\varphi$")
    ax2.plot(t, cols["max_phi"], label=r"$\max\varphi$")
    ax2.set_xlabel("t")
    ax2.set_ylabel(r"$\varphi$ range")
    ax2.legend(fontsize=8)
    _save(fig, out_path)


def plot_taylor(csv_path: Path, out_path: Path):
    cols = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    ax.loglog(cols["t"], cols["remainder"], "o-", label="remainder")
    t0, r0 = cols["t"][0], cols["remainder"][0]
    if r0 > 0:
        ref = [r0 * (t / t0) ** 2 for t in cols["t"]]
        ax.loglog(cols["t"], ref, "k--", lw=0.8, label="slope 2")
    ax.set_xlabel("step t")
    ax.set_ylabel("first-order remainder")
    ax.legend(fontsize=8)
    _save(fig, out_path)


def plot_gradcheck(csv_path: Path, out_path: Path):
    cols = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    idx = cols["direction"]
    width = 0.35
    ax.bar([i - width / 2 for i in idx], cols["rel_err_lin_vs_fd"], width,
           label="linearized vs FD")
    ax.bar([i + width / 2 for i in idx], cols["rel_err_adj_vs_lin"], width,
           label="adjoint vs linearized")
    ax.set_yscale("log")
    ax.set_xlabel("direction")
    ax.set_ylabel("relative error")
    ax.legend(fontsize=8)
    _save(fig, out_path)


def plot_adjoint_test(csv_path: Path, out_path: Path):
    cols = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.bar(cols["direction"], cols["rel_gap"])
    ax.set_yscale("log")
    ax.set_xlabel("direction")
    ax.set_ylabel("relative duality gap")
    _save(fig, out_path)


def plot_cost_history(csv_path: Path, out_path: Path):
    cols = _read_csv(csv_path)
    fig, ax1 = plt.subplots(figsize=(5, 3.4))
    ax1.plot(cols["iteration"], cols["total_cost"], "C0-", label="total cost")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("total cost", color="C0")
    ax2 = ax1.twinx()
    ax2.semilogy(cols["iteration"], cols["stationarity_residual"], "C1.-",
                 label="residual")
    ax2.set_ylabel("stationarity residual", color="C1")
    _save(fig, out_path)


_RENDERERS = {
    "norms.csv": ("norms.png", plot_norms),
    "taylor.csv": ("taylor.png", plot_taylor),
    "gradcheck.csv": ("gradcheck.png", plot_gradcheck),
    "adjoint_test.csv": ("adjoint_test.png", plot_adjoint_test),
    "cost_history.csv": ("cost_history.png", plot_cost_history),
}


def render_report(out_dir) -> list[str]:
    """Render figures for every known CSV in a run directory."""
    out_dir = Path(out_dir)
    written = []
    for csv_name, (png_name, renderer) in _RENDERERS.items():
        csv_path = out_dir / csv_name
        if csv_path.exists():
            renderer(csv_path, out_dir / png_name)
            written.append(png_name)
    return written
