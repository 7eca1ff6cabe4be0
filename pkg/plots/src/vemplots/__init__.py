"""Offline figure generation for vemeig CSV artifacts."""

from .render import (
    SchemaError,
    plot_convergence,
    plot_eigenfunction,
    plot_sweep,
)

__all__ = [
    "SchemaError",
    "plot_convergence",
    "plot_eigenfunction",
    "plot_sweep",
]
