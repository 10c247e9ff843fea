"""Figures and gnuplot-style data files for experiment and bound-check output."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_LABELS = {"exit-time": r"$\tau_N/N^2$", "range": "scaled $R_N$", "multirange": r"scaled $R^{(p)}_N$"}


def _series(result, statistic: str, p=None, k: int = 1):
    key = {"exit-time": "tau", "range": "range", "multirange": "multirange"}[statistic]
    Ns, y, e = [], [], []
    for i, entry in enumerate(result.per_n):
        st = result.stat(i, key, p)
        Ns.append(entry["N"])
        y.append(st["moments"][k - 1])
        e.append(st["moment_se"][k - 1])
    return np.array(Ns), np.array(y), np.array(e)


def _panels(result, k: int):
    out = [("exit-time", None), ("range", None)]
    if result.per_n and "1" in result.per_n[0]["statistics"]["multirange"]:
        out.append(("multirange", 1))
    return out


def moments_figure(result, path, k: int = 1):
    """Scaled k-th moments against 1/log N with the predicted limits of both conventions."""
    panels = _panels(result, k)
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.6), squeeze=False)
    for ax, (statistic, p) in zip(axes[0], panels):
        Ns, y, e = _series(result, statistic, p, k)
        x = 1 / np.log(Ns)
        ax.errorbar(x, y, yerr=e, fmt="o-", ms=4, capsize=3, label="Monte Carlo")
        for pr in result.predictions:
            if pr["statistic"] == statistic and pr["p"] == p and pr["k"] == k:
                style = "--" if pr["convention"] == "as-stated" else ":"
                ax.axhline(pr["predicted"], ls=style, color="k" if style == "--" else "C3",
                           label=f"{pr['convention']} {pr['predicted']:.4g}")
        title = _LABELS[statistic] + ("" if p is None else f", p={p}")
        ax.set_title(title + ("" if k == 1 else f", k={k}"))
        ax.set_xlabel("1/log N")
        ax.set_xlim(left=0)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def bound_figure(rows: list[dict], path):
    """Inverse conductance / log N at the midpoint and over the midband, with the two bounds."""
    Ns = np.array([r["N"] for r in rows])
    mid = np.array([r["midpoint_inverse"] for r in rows]) / np.log(Ns)
    band = np.array([r["midband_min_over_logN"] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.semilogx(Ns, mid, "o-", base=2, label="midpoint")
    ax.semilogx(Ns, band, "s-", base=2, label="midband min")
    ax.axhline(1 / math.pi ** 2, ls="--", color="k", lw=0.8, label=r"$1/\pi^2$")
    ax.axhline(1 / (2 * math.pi ** 2), ls=":", color="k", lw=0.8, label=r"$1/(2\pi^2)$")
    ax.set_xlabel("N")
    ax.set_ylabel(r"$g_N^{-1}/\log N$")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def histogram_figure(samples, scale: float, path, label: str = "scaled range"):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.hist(np.asarray(samples.range, dtype=float) / scale, bins=60, density=True,
            histtype="stepfilled", alpha=0.7)
    ax.set_xlabel(label)
    ax.set_ylabel("density")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_plot_data(result, path, k_max: int | None = None):
    """Blocks of ``1/log N  1/N  y  yerr`` separated by two blank lines (gnuplot ``index``)."""
    k_max = k_max or len(result.per_n[0]["statistics"]["tau"]["moments"])
    lines = []
    for statistic, p in [("exit-time", None), ("range", None)] + \
            [("multirange", int(q)) for q in result.per_n[0]["statistics"]["multirange"]]:
        for k in range(1, k_max + 1):
            Ns, y, e = _series(result, statistic, p, k)
            lines.append(f"# {statistic}" + ("" if p is None else f" p={p}") + f" k={k}")
            lines.append("# 1/logN 1/N moment se")
            for N, yy, ee in zip(Ns, y, e):
                lines.append(f"{1 / math.log(N):.10g} {1 / N:.10g} {yy:.10g} {ee:.10g}")
            lines.extend(["", ""])
    Path(path).write_text("\n".join(lines))
    return Path(path)
