"""Matplotlib rendering of run artifacts to image files.

Every renderer takes the in-memory result object and a target path; the CLI
calls these alongside the CSV/JSON writers so each run leaves a figure next
to its data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_field_figure(field, path, title=None):
    """Heat map of a Bloch-grid scalar field."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    mesh = ax.pcolormesh(field.phis, field.thetas, field.values, shading="nearest",
                         cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=field.quantity)
    ax.set_xlabel(r"$\varphi$ [rad]")
    ax.set_ylabel(r"$\theta$ [rad]")
    ax.set_title(title or f"{field.quantity} landscape")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(sweep, path, title=None):
    """Extreme curvature versus coupling strength."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(sweep.couplings, sweep.max_curvature, "o-", label="max curvature")
    ax.plot(sweep.couplings, sweep.min_curvature, "s-", label="min curvature")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("coupling")
    ax.set_ylabel("scalar curvature")
    ax.legend()
    ax.set_title(title or "curvature extrema vs coupling")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trajectory_figure(record, path, curvature=None, title=None):
    """Bloch components (and optionally curvature) along one sample path."""
    n_rows = 2 if curvature is not None else 1
    fig, axes = plt.subplots(n_rows, 1, figsize=(7.0, 3.0 * n_rows), sharex=True)
    axes = np.atleast_1d(axes)
    psi = np.stack([s.amplitudes for s in record.states])
    m01 = psi[:, 0].conj() * psi[:, 1]
    axes[0].plot(record.times, 2 * m01.real, label=r"$\langle\sigma_x\rangle$", lw=0.9)
    axes[0].plot(record.times, 2 * m01.imag, label=r"$\langle\sigma_y\rangle$", lw=0.9)
    axes[0].plot(record.times, np.abs(psi[:, 0]) ** 2 - np.abs(psi[:, 1]) ** 2,
                 label=r"$\langle\sigma_z\rangle$", lw=0.9)
    axes[0].set_ylabel("Bloch components")
    axes[0].legend(loc="upper right", fontsize=8)
    if curvature is not None:
        axes[1].plot(record.times, curvature, color="tab:red", lw=0.9)
        axes[1].set_ylabel("scalar curvature")
    axes[-1].set_xlabel("t")
    fig.suptitle(title or f"sample path (seed {record.seed})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_stability_figure(report, path, title=None):
    """Histogram of per-path residency fractions with the verdict threshold."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.hist(report.per_path_fractions, bins=20, range=(0.0, 1.0), color="tab:blue",
            alpha=0.8)
    ax.axvline(report.threshold, color="k", ls="--", label=f"threshold {report.threshold}")
    ax.axvline(report.fraction_resident, color="tab:red",
               label=f"mean {report.fraction_resident:.3f} ({report.verdict})")
    ax.set_xlabel("fraction of time within the residency radius")
    ax.set_ylabel("paths")
    ax.legend()
    ax.set_title(title or f"{report.kind} residency")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
