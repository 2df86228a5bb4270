"""Static figures from harness trace and summary CSVs."""

from .render import (
    FigureSpec,
    SchemaError,
    plot_loss_curves,
    plot_sweep_panel,
    plot_trajectory_1d,
    read_trace,
)

__version__ = "0.1.0"
