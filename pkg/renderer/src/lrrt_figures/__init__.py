"""Figure rendering for lrrt harness CSVs.

Consumes the result CSVs written by the lrrt command line (and field /
reference CSVs) and renders them to PNG/SVG figures or markdown tables.
The package talks to the solver suite only through those files; it never
imports it.
"""

from .render import (
    EmptyDataError,
    MissingColumnError,
    RenderError,
    render_figure,
    render_figures,
)
from .specs import KINDS, FigureSpec, load_specs

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "EmptyDataError",
    "FigureSpec",
    "MissingColumnError",
    "RenderError",
    "load_specs",
    "render_figure",
    "render_figures",
]
