"""Figure rendering from harness CSVs.

Three figure kinds: loss curves over traces, a 1-D trajectory over a
sampled landscape curve, and a sensitivity sweep panel.  Rendering is
pure: identical input files produce identical image bytes (fixed figure
geometry, the Agg backend, pinned PNG metadata).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "FigureSpec",
    "SchemaError",
    "read_trace",
    "plot_loss_curves",
    "plot_trajectory_1d",
    "plot_sweep_panel",
]

TRACE_COLUMNS = ("step", "epoch", "beta", "loss", "grad_norm", "alpha_logged")
_FIGSIZE = (6.4, 4.0)
_DPI = 100
_METADATA = {"Software": "interpolatron-plots"}


class SchemaError(ValueError):
    """Input CSV does not match the harness trace/summary schema."""


@dataclass(frozen=True)
class FigureSpec:
    """What to render: input CSVs, figure kind, labels, output path."""

    inputs: tuple
    kind: str
    out: Path
    labels: tuple | None = None
    log_y: bool = False
    x_axis: str = "step"

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(Path(p) for p in self.inputs))
        object.__setattr__(self, "out", Path(self.out))
        if self.kind not in ("loss-curves", "trajectory-1d", "sweep-panel"):
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("need at least one input CSV")
        for p in self.inputs:
            if not p.exists():
                raise FileNotFoundError(f"input {p} does not exist")
        if self.labels is not None and len(self.labels) != len(self.inputs):
            raise ValueError("need exactly one label per input")
        if self.x_axis not in ("step", "epoch"):
            raise ValueError("x_axis must be 'step' or 'epoch'")


def read_trace(path) -> dict:
    """Read one harness trace CSV into arrays, checking the schema."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    for col in TRACE_COLUMNS:
        if col not in header:
            raise SchemaError(f"{path}: missing column '{col}'")
    idx = {col: header.index(col) for col in header}
    rows = [line.split(",") for line in lines[1:] if line]
    out = {
        "step": np.array([int(r[idx["step"]]) for r in rows]),
        "epoch": np.array([int(r[idx["epoch"]]) for r in rows]),
        "loss": np.array([float(r[idx["loss"]]) for r in rows]),
        "grad_norm": np.array([float(r[idx["grad_norm"]]) for r in rows]),
    }
    if "x" in idx:
        out["x"] = np.array([float(r[idx["x"]]) for r in rows])
    return out


def _save(fig, out: Path) -> None:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=_DPI, metadata=_METADATA)
    plt.close(fig)


def _label_for(spec: FigureSpec, i: int) -> str:
    if spec.labels is not None:
        return spec.labels[i]
    return spec.inputs[i].stem


def plot_loss_curves(spec: FigureSpec) -> Path:
    """One loss line per input trace; legend from run names."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for i, path in enumerate(spec.inputs):
        trace = read_trace(path)
        ax.plot(trace[spec.x_axis], trace["loss"], label=_label_for(spec, i), linewidth=1.2)
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(spec.x_axis)
    ax.set_ylabel("loss")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, spec.out)
    return spec.out


def plot_trajectory_1d(spec: FigureSpec, curve_path) -> Path:
    """Trajectory arrows of a 1-D run over the sampled landscape.

    The trace must carry the iterate column (harness option
    ``log_iterates`` on a 1-D problem).  Arrows whose endpoint leaves the
    plotted range are truncated at the boundary and annotated with the
    true endpoint.
    """
    if len(spec.inputs) != 1:
        raise ValueError("trajectory figure takes exactly one trace")
    trace = read_trace(spec.inputs[0])
    if "x" not in trace:
        raise SchemaError(
            f"{spec.inputs[0]}: no iterate column 'x'; the trace is either "
            "multi-dimensional or was recorded without iterate logging"
        )
    curve_lines = Path(curve_path).read_text().splitlines()
    if not curve_lines or curve_lines[0].split(",")[:2] != ["x", "f"]:
        raise SchemaError(f"{curve_path}: expected columns 'x,f'")
    cx = np.array([float(l.split(",")[0]) for l in curve_lines[1:] if l])
    cf = np.array([float(l.split(",")[1]) for l in curve_lines[1:] if l])

    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(cx, cf, color="black", linewidth=1.0)
    lo, hi = float(cx.min()), float(cx.max())

    def f_at(x):
        return float(np.interp(x, cx, cf))

    xs = trace["x"]
    points = [(float(x), f_at(float(x))) for x in xs]
    for t in range(len(points) - 1):
        (x0, y0), (x1, y1) = points[t], points[t + 1]
        color = "tab:blue" if x1 >= x0 else "tab:red"
        if x1 < lo or x1 > hi:
            x_clip = min(max(x1, lo), hi)
            ax.annotate(
                "",
                xy=(x_clip, f_at(x_clip)),
                xytext=(x0, y0),
                arrowprops=dict(arrowstyle="->", color="tab:purple", lw=1.4),
            )
            ax.text(
                x_clip,
                f_at(x_clip),
                f"step {t + 2} -> x={x1:.3f}",
                fontsize=7,
                color="tab:purple",
            )
        else:
            ax.annotate(
                "",
                xy=(x1, y1),
                xytext=(x0, y0),
                arrowprops=dict(arrowstyle="->", color=color, lw=1.2),
            )
    ax.plot([points[0][0]], [points[0][1]], marker="o", color="black", markersize=4)
    ax.set_xlabel("x")
    ax.set_ylabel("f(x)")
    ax.grid(True, alpha=0.3)
    _save(fig, spec.out)
    return spec.out


def plot_sweep_panel(spec: FigureSpec) -> Path:
    """Final-loss panels per sweep axis from a sweep summary CSV."""
    if len(spec.inputs) != 1:
        raise ValueError("sweep panel takes exactly one summary CSV")
    lines = spec.inputs[0].read_text().splitlines()
    header = lines[0].split(",")
    for col in ("axis", "value", "final_loss"):
        if col not in header:
            raise SchemaError(f"{spec.inputs[0]}: missing column '{col}'")
    idx = {c: header.index(c) for c in header}
    groups: dict = {}
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split(",")
        groups.setdefault(cells[idx["axis"]], []).append(
            (float(cells[idx["value"]]), float(cells[idx["final_loss"]]))
        )
    axes_names = sorted(groups)
    fig, axs = plt.subplots(1, len(axes_names), figsize=(4.0 * len(axes_names), 3.2))
    if len(axes_names) == 1:
        axs = [axs]
    for ax, name in zip(axs, axes_names):
        pairs = sorted(groups[name])
        ax.plot([v for v, _ in pairs], [f for _, f in pairs], marker="o")
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel(name)
        ax.set_ylabel("final loss")
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, spec.out)
    return spec.out
