"""Figure rendering for reproduction reports (files only, no display)."""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.2,
    "legend.frameon": False,
    "savefig.dpi": 150,
    # keeps repeated renders byte-identical
    "svg.hashsalt": "loopcv",
}

_ELEMENTS = [(0, 0), (0, 1), (1, 0), (1, 1)]


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def contours(panels: Dict[str, List[Tuple[str, np.ndarray]]], path, title: str = "") -> None:
    """One panel per parameter value; each holds labelled (x, p) polylines."""
    with plt.rc_context(STYLE):
        n = len(panels)
        fig, axes = plt.subplots(1, n, figsize=(3.0 * n, 3.1), squeeze=False)
        for ax, (name, curves) in zip(axes[0], panels.items()):
            for label, pts in curves:
                dashed = label.startswith("model")
                ax.plot(pts[:, 0], pts[:, 1], "--" if dashed else "-", label=label)
            ax.set_title(name)
            ax.set_xlabel("x")
            ax.set_ylabel("p")
            ax.set_aspect("equal", adjustable="datalim")
            ax.axhline(0, color="0.8", lw=0.5)
            ax.axvline(0, color="0.8", lw=0.5)
        axes[0][-1].legend(fontsize=6, loc="upper right")
        if title:
            fig.suptitle(title)
        _save(fig, path)


def matrix_elements(
    params: Sequence[float],
    model: np.ndarray,
    tomo: np.ndarray,
    err: np.ndarray,
    target: np.ndarray,
    path,
    xlabel: str,
) -> None:
    """2x2 grid of matrix elements versus the gate parameter."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(5.6, 4.4), sharex=True)
        for (i, j) in _ELEMENTS:
            ax = axes[i][j]
            ax.plot(params, target[:, i, j], "k:", label="ideal")
            ax.plot(params, model[:, i, j], "s", mfc="none", label="model")
            ax.errorbar(params, tomo[:, i, j], yerr=err[:, i, j], fmt="o", ms=3, capsize=2, label="tomography")
            ax.set_title(f"({i + 1},{j + 1})")
        for ax in axes[1]:
            ax.set_xlabel(xlabel)
        axes[0][0].legend(fontsize=6)
        _save(fig, path)


def ellipse_parameters(
    params: Sequence[float],
    model: Dict[str, np.ndarray],
    tomo: Dict[str, np.ndarray],
    err: Dict[str, np.ndarray],
    path,
    xlabel: str,
) -> None:
    """Major/minor variances and tilt of the vacuum-input output ellipse."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(6.0, 2.8))
        for key, m in (("var_major", "^"), ("var_minor", "v")):
            axes[0].plot(params, model[key], m, mfc="none", label=f"{key} model")
            axes[0].errorbar(params, tomo[key], yerr=err[key], fmt=m, ms=3, capsize=2, label=f"{key} tomo")
        axes[0].axhline(1.0, color="0.7", lw=0.6)
        axes[0].set_yscale("log")
        axes[0].set_ylabel("variance")
        axes[1].plot(params, model["tilt_deg"], "s", mfc="none", label="model")
        axes[1].errorbar(params, tomo["tilt_deg"], yerr=err["tilt_deg"], fmt="o", ms=3, capsize=2, label="tomo")
        axes[1].set_ylabel("tilt (deg)")
        for ax in axes:
            ax.set_xlabel(xlabel)
            ax.legend(fontsize=6)
        _save(fig, path)


def fidelities(
    labels: Sequence[str],
    columns: Dict[str, Sequence[float]],
    path,
    errors: Dict[str, Sequence[float]] = None,
) -> None:
    errors = errors or {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 2.8))
        x = np.arange(len(labels))
        w = 0.8 / max(1, len(columns))
        for k, (name, vals) in enumerate(columns.items()):
            ax.bar(x + (k - (len(columns) - 1) / 2) * w, vals, w, yerr=errors.get(name), capsize=2, label=name)
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("fidelity")
        ax.legend(fontsize=6, loc="lower left")
        _save(fig, path)
