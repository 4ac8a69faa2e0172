"""Figure rendering for the tracking simulator's CSV outputs."""

from ristrack_plots.figures import FIGURE_KINDS, FigureSpec, SchemaError, render

__version__ = "0.1.0"

__all__ = ["FIGURE_KINDS", "FigureSpec", "SchemaError", "render"]
