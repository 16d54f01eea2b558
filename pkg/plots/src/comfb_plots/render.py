"""Figure rendering from artifact directories.

Renders are pure functions of the artifact files and style options: fixed
dpi, no clock-dependent metadata, so re-rendering a directory reproduces the
image byte for byte.  Cells whose verdict is not "ok" are shown as a hatched
mask, never interpolated over.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .artifacts import (
    ArtifactError, SimulateArtifacts, SweepArtifacts, axis_label,
)

KINDS = ("heatmap", "slices", "timeseries", "orbit")

_PNG_METADATA = {"Software": "comfb-render"}


@dataclass
class FigureJob:
    manifest_path: str
    kind: str
    measure: str
    out_path: str
    colormap: str = "viridis"
    contour: bool = True
    slice_values: tuple[float, ...] = ()
    dpi: int = 150


@dataclass
class RenderInfo:
    out_path: str
    n_hatched: int = 0
    n_contour_lines: int = 0
    value_range: tuple[float, float] = (np.nan, np.nan)
    xlabel: str = ""
    ylabel: str = ""


def render(job: FigureJob) -> RenderInfo:
    if job.kind not in KINDS:
        raise ArtifactError(f"unknown figure kind {job.kind!r}")
    if job.kind == "heatmap":
        return _render_heatmap(job)
    if job.kind == "slices":
        return _render_slices(job)
    return _render_timeseries_or_orbit(job)


def _edges(centers: np.ndarray) -> np.ndarray:
    mid = 0.5 * (centers[1:] + centers[:-1])
    first = centers[0] - (mid[0] - centers[0]) if len(centers) > 1 \
        else centers[0] - 0.5
    last = centers[-1] + (centers[-1] - mid[-1]) if len(centers) > 1 \
        else centers[-1] + 0.5
    return np.concatenate([[first], mid, [last]])


def _save(fig, job) -> None:
    fig.savefig(job.out_path, dpi=job.dpi, metadata=_PNG_METADATA)
    plt.close(fig)


def _render_heatmap(job: FigureJob) -> RenderInfo:
    art = SweepArtifacts.open(job.manifest_path)
    if not art.is_2d:
        raise ArtifactError("heatmap needs a 2D sweep; use kind=slices")
    values, ok = art.measure_grid(job.measure)
    x, y = art.axis_values
    masked = np.ma.masked_where(~ok, values)

    fig, ax = plt.subplots(figsize=(8, 4))
    xe, ye = _edges(x), _edges(y)
    cmap = plt.get_cmap(job.colormap).copy()
    cmap.set_bad("white")
    mesh = ax.pcolormesh(xe, ye, masked.T, cmap=cmap, shading="flat")
    fig.colorbar(mesh, ax=ax, label=f"{job.measure} (period max)")

    n_hatched = 0
    for i in range(len(x)):
        for j in range(len(y)):
            if not ok[i, j]:
                ax.add_patch(Rectangle(
                    (xe[i], ye[j]), xe[i + 1] - xe[i], ye[j + 1] - ye[j],
                    fill=False, hatch="////", edgecolor="0.4", linewidth=0.0))
                n_hatched += 1

    n_lines = 0
    if job.contour:
        for line in art.contours(job.measure):
            ax.plot(line[:, 0], line[:, 1], color="white", linewidth=1.5)
            n_lines += 1

    xl, yl = (axis_label(k) for k in art.axis_keys)
    ax.set_xlabel(xl)
    ax.set_ylabel(yl)
    ax.set_title(art.manifest.get("preset") or "sweep")
    fig.tight_layout()
    _save(fig, job)
    vals = masked.compressed()
    rng = ((float(vals.min()), float(vals.max())) if vals.size
           else (np.nan, np.nan))
    return RenderInfo(job.out_path, n_hatched, n_lines, rng, xl, yl)


def _render_slices(job: FigureJob) -> RenderInfo:
    art = SweepArtifacts.open(job.manifest_path)
    values, ok = art.measure_grid(job.measure)
    fig, ax = plt.subplots(figsize=(8, 4))

    if art.is_2d:
        # fixed-axis1 rows plotted against axis2
        x1, x2 = art.axis_values
        wanted = job.slice_values or tuple(
            x1[np.linspace(0, len(x1) - 1, 4, dtype=int)])
        for target in wanted:
            i = int(np.argmin(np.abs(x1 - target)))
            row = np.where(ok[i], values[i], np.nan)
            ax.plot(x2, row, marker=".",
                    label=f"{art.axis_keys[0]} = {x1[i]:.4g}")
        ax.legend(fontsize=8)
        xl = axis_label(art.axis_keys[1])
        vals = values[ok]
    else:
        (x1,) = art.axis_values
        row = np.where(ok, values, np.nan)
        ax.plot(x1, row, marker=".")
        xl = axis_label(art.axis_keys[0])
        vals = values[ok]

    yl = f"{job.measure} (period max)"
    ax.set_xlabel(xl)
    ax.set_ylabel(yl)
    ax.set_title(art.manifest.get("preset") or "sweep")
    fig.tight_layout()
    _save(fig, job)
    rng = ((float(np.nanmin(vals)), float(np.nanmax(vals))) if vals.size
           else (np.nan, np.nan))
    return RenderInfo(job.out_path, 0, 0, rng, xl, yl)


def _render_timeseries_or_orbit(job: FigureJob) -> RenderInfo:
    art = SimulateArtifacts.open(job.manifest_path)
    fig, ax = plt.subplots(figsize=(8, 4))
    if job.kind == "orbit":
        series = art.series("cycle.csv")
        ax.plot(series["re_alpha"], series["im_alpha"], linewidth=1.0)
        xl, yl = "Re alpha", "Im alpha"
        vals = series["re_alpha"]
        ax.set_aspect("equal", adjustable="datalim")
    else:
        filename = "meanfield.csv" if job.measure == "abs_alpha" \
            else "correlations.csv"
        series = art.series(filename)
        if job.measure not in series:
            raise ArtifactError(
                f"{filename} has no column {job.measure!r}")
        ax.plot(series["t"], series[job.measure], linewidth=0.8)
        xl, yl = "t [1/omega_b]", job.measure
        vals = series[job.measure]
    ax.set_xlabel(xl)
    ax.set_ylabel(yl)
    fig.tight_layout()
    _save(fig, job)
    return RenderInfo(job.out_path, 0, 0,
                      (float(np.nanmin(vals)), float(np.nanmax(vals))),
                      xl, yl)
