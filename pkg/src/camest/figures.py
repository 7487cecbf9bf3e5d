"""Matplotlib rendering for the CLI report paths (PNG files, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def render_estimate(result_dict: dict, path) -> str:
    """Point estimates with interval whiskers for the CC and CAM estimates."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    labels = ["complete-case", "CAM"]
    estimates = [result_dict["cc"]["estimate"], result_dict["estimate"]]
    los = [result_dict["cc"]["ci"][0], result_dict["ci"][0]]
    his = [result_dict["cc"]["ci"][1], result_dict["ci"][1]]
    xs = np.arange(len(labels))
    err = [np.subtract(estimates, los), np.subtract(his, estimates)]
    ax.errorbar(xs, estimates, yerr=err, fmt="o", capsize=6, color="black")
    ax.set_xticks(xs, labels)
    ax.set_ylabel("estimate")
    ax.set_title("estimate with confidence interval")
    ax.margins(x=0.3)
    return _save(fig, path)


def render_simulation(report, path) -> str:
    """Sampling histograms (estimates) or a boxplot (relative metrics)."""
    cols = report.columns
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    if report.kind == "ustat":
        ax.hist(cols["estimate_cc"], bins=40, alpha=0.55, label="complete-case", color="black")
        ax.hist(cols["estimate_cam"], bins=40, alpha=0.55, label="CAM", color="red")
        ax.set_xlabel("estimate")
        ax.set_ylabel("replications")
        ax.legend()
        ax.set_title(f"{report.model}: sampling distributions ({report.reps} reps)")
    else:
        ax.boxplot([cols["relative"]], tick_labels=["(metric_cc - metric_cam) / metric_cc"])
        ax.axhline(0.0, color="grey", lw=0.8)
        ax.set_ylabel("relative improvement")
        ax.set_title(f"{report.model}: CAM vs complete case ({report.reps} reps)")
    return _save(fig, path)


def render_density_grid(axes, f_cc, f_cam, path, truth=None) -> str:
    """Density panels: lines for d = 1, filled contours for d = 2."""
    if len(axes) == 1:
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        ax.plot(axes[0], f_cc, color="black", label="complete-case")
        ax.plot(axes[0], f_cam, color="red", label="CAM")
        if truth is not None:
            ax.plot(axes[0], truth, color="grey", ls="--", label="truth")
        ax.set_xlabel("x")
        ax.set_ylabel("density")
        ax.legend()
        return _save(fig, path)
    if len(axes) == 2:
        panels = [("complete-case", f_cc), ("CAM", f_cam)]
        if truth is not None:
            panels.append(("truth", truth))
        fig, axs = plt.subplots(1, len(panels), figsize=(4.0 * len(panels), 3.4))
        for ax, (name, grid) in zip(np.atleast_1d(axs), panels):
            im = ax.contourf(axes[0], axes[1], grid.T, levels=18)
            ax.set_title(name)
            fig.colorbar(im, ax=ax, shrink=0.85)
        return _save(fig, path)
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.text(0.5, 0.5, f"no plot for d = {len(axes)}", ha="center")
    return _save(fig, path)


def render_regression(points, eta_cc, eta_cam, path) -> str:
    """Fitted values along the query list."""
    points = np.atleast_2d(points)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    if points.shape[1] == 1:
        order = np.argsort(points[:, 0])
        ax.plot(points[order, 0], np.asarray(eta_cc)[order], "o-", color="black",
                label="complete-case", ms=3)
        ax.plot(points[order, 0], np.asarray(eta_cam)[order], "o-", color="red",
                label="CAM", ms=3)
        ax.set_xlabel("x")
        ax.legend()
    else:
        ax.plot(eta_cc, eta_cam, "o", ms=3, color="black")
        lim = [min(np.nanmin(eta_cc), np.nanmin(eta_cam)),
               max(np.nanmax(eta_cc), np.nanmax(eta_cam))]
        ax.plot(lim, lim, color="grey", lw=0.8)
        ax.set_xlabel("complete-case fit")
        ax.set_ylabel("CAM fit")
    ax.set_title("local-constant regression")
    return _save(fig, path)
