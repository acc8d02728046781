"""Matplotlib rendering of the estimator's result files.

Conventions: solid black point estimate, gray shaded uniform band, red
long-dashed linear (2SLS) overlay. Output bytes are reproducible: fonts are
pinned and file metadata carries no timestamps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schema import MissingSeries, SchemaMismatch, curve_from, load_payload

KINDS = ("lar", "asf", "pe", "first_stage", "histogram")

LABELS = {
    "lar": ("treatment level", "local average response"),
    "asf": ("treatment level", "average structural function"),
    "pe": ("tariff increase", "policy effect"),
    "first_stage": ("instrument level", "first-stage effect"),
    "histogram": ("treatment level", "count"),
}

_RC = {
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "svg.hashsalt": "nlshift-figs",
}


@dataclass(frozen=True)
class FigureJob:
    """One figure to render from result files."""

    kind: str
    input: Path
    output: Path
    overlay: Path | None = None
    overlay_key: str | None = None  # period label inside the overlay file
    fmt: str = "png"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if self.fmt not in ("png", "pdf"):
            raise ValueError(f"unsupported format {self.fmt!r}")


def _overlay_block(job: FigureJob, name: str) -> dict | None:
    if job.overlay is None:
        return None
    payload = load_payload(job.overlay)
    blocks = payload.get("linear_overlays", {})
    key = job.overlay_key or (next(iter(blocks)) if len(blocks) == 1 else None)
    if key is None or key not in blocks:
        raise MissingSeries(f"overlay block {job.overlay_key!r} not found in {job.overlay}")
    return blocks[key].get(name)


def build_figure(job: FigureJob) -> plt.Figure:
    """Assemble the figure without writing it (exposed for inspection)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if job.kind in ("lar", "asf", "pe"):
            _draw_curve(ax, job)
        elif job.kind == "first_stage":
            _draw_first_stage(ax, job)
        else:
            _draw_histogram(ax, job)
        xlabel, ylabel = LABELS[job.kind]
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
    return fig


def _draw_curve(ax, job: FigureJob) -> None:
    payload = load_payload(job.input)
    curve = curve_from(payload, job.kind)
    x = np.asarray(curve["x"], dtype=float)
    y = np.asarray(curve["value"], dtype=float)
    if "lower" in curve:
        ax.fill_between(x, curve["lower"], curve["upper"], color="0.8", label="uniform band")
    ax.plot(x, y, color="black", linestyle="-", label="estimate")
    name = "linear_asf" if job.kind == "asf" else ("linear_pe" if job.kind == "pe" else None)
    if name is not None:
        block = _overlay_block(job, name)
        if block is not None:
            ox = block.get("x", block.get("phi"))
            ax.plot(ox, block["value"], color="tab:red", linestyle=(0, (8, 3)), label="linear 2SLS")
    if job.kind == "lar" or job.kind == "pe":
        ax.axhline(0.0, color="0.4", linewidth=0.6)
    ax.legend(loc="best")


def _draw_first_stage(ax, job: FigureJob) -> None:
    payload = load_payload(job.input)
    blocks = payload.get("first_stage_effects")
    if not blocks:
        raise MissingSeries("no first-stage surface in payload")
    key = job.overlay_key or next(iter(blocks))
    if key not in blocks:
        raise MissingSeries(f"first-stage block {key!r} not found")
    block = blocks[key]
    z = np.asarray(block["z"], dtype=float)
    surface = np.asarray(block["surface"], dtype=float)
    styles = ["-", (0, (8, 3)), ":"]
    for col, (v, style) in enumerate(zip(block["v_levels"], styles * 10)):
        ax.plot(z, surface[:, col], color="black", linestyle=style, label=f"v = {v:g}")
    ax.axhline(0.0, color="0.4", linewidth=0.6)
    ax.legend(loc="best")


def _draw_histogram(ax, job: FigureJob) -> None:
    with Path(job.input).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if "x" not in header:
            raise SchemaMismatch(f"{job.input}: treatment file lacks an x column")
        idx = header.index("x")
        x = np.array([float(row[idx]) for row in reader])
    if len(x) == 0:
        raise MissingSeries("treatment file is empty")
    ax.hist(x, bins=40, color="0.6", edgecolor="white")
    for q in np.percentile(x, [5, 95]):
        ax.axvline(q, color="tab:red", linestyle=(0, (6, 3)), linewidth=1.0)


def render(job: FigureJob) -> Path:
    """Render one figure to its output path; read-only over inputs."""
    fig = build_figure(job)
    job.output.parent.mkdir(parents=True, exist_ok=True)
    if job.fmt == "pdf":
        metadata = {"CreationDate": None, "Producer": "nlshift-figs", "Creator": "nlshift-figs"}
    else:
        metadata = {"Software": "nlshift-figs"}
    fig.savefig(job.output, format=job.fmt, metadata=metadata)
    plt.close(fig)
    return job.output
