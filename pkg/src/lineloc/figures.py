"""Render report figures to files alongside the CSV output.

All plots work from :class:`~lineloc.pipeline.FrameRecord` lists, use the
Agg backend, and never open a window. Frames without a value (failed
matching, unavailable integrity) appear as gaps.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .integrity import AXES
from .pipeline import FrameRecord

_TRANSLATION = (0, 1, 2)
_ROTATION = (3, 4, 5)


def _series(records: list[FrameRecord], getter) -> np.ndarray:
    return np.array([np.nan if getter(r) is None else getter(r) for r in records])


def _axis_series(records, attr, axis) -> np.ndarray:
    values = []
    for record in records:
        array = getattr(record, attr)
        values.append(np.nan if array is None else array[axis])
    return np.array(values)


def _bounds_figure(records, axes_indices, unit, scale, title):
    times = _series(records, lambda r: r.timestamp)
    fig, subplots = plt.subplots(len(axes_indices), 1, sharex=True, figsize=(8, 7))
    for subplot, axis in zip(subplots, axes_indices):
        error = np.abs(_axis_series(records, "errors", axis)) * scale
        pl = _axis_series(records, "pl", axis) * scale
        sigma3 = _axis_series(records, "sigma3", axis) * scale
        subplot.plot(times, pl, label="PL", color="tab:blue")
        subplot.plot(times, sigma3, label="3-sigma", color="tab:green")
        subplot.plot(times, error, label="|error|", color="tab:red")
        subplot.set_ylabel(f"{AXES[axis]} [{unit}]")
        subplot.grid(True, alpha=0.3)
    subplots[0].set_title(title)
    subplots[0].legend(loc="upper right", ncol=3, fontsize=8)
    subplots[-1].set_xlabel("time [s]")
    fig.tight_layout()
    return fig


def render_report_figures(records: list[FrameRecord], out_dir, dpi: int = 120) -> list[Path]:
    """Write the translation/rotation bound plots and the ICN plot as PNGs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig = _bounds_figure(records, _TRANSLATION, "m", 1.0, "Translation error bounds")
    path = out_dir / "translation_bounds.png"
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    paths.append(path)

    fig = _bounds_figure(
        records, _ROTATION, "deg", 180.0 / np.pi, "Rotation error bounds"
    )
    path = out_dir / "rotation_bounds.png"
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    paths.append(path)

    times = _series(records, lambda r: r.timestamp)
    icn = _series(records, lambda r: r.icn)
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.semilogy(times, icn, color="tab:purple")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("inverse condition number")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = out_dir / "icn.png"
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    paths.append(path)
    return paths


def render_sweep_figure(rows: list[dict], parameter: str, out_path, dpi: int = 120) -> Path:
    """Bound rate of every axis against the swept parameter value."""
    out_path = Path(out_path)
    values = [row["value"] for row in rows]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for axis_index, axis in enumerate(AXES):
        rates = [row["pl_bound_rate"][axis_index] for row in rows]
        ax.plot(values, rates, marker="o", label=axis)
    ax.axhline(0.95, color="red", linestyle="--", linewidth=1, label="95%")
    ax.set_xlabel(parameter)
    ax.set_ylabel("PL bound rate")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(ncol=4, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
    return out_path
