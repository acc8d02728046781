"""Figure rendering for nlshift result files."""

from .render import KINDS, FigureJob, build_figure, render
from .schema import MissingSeries, SchemaMismatch, load_payload

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "FigureJob",
    "build_figure",
    "render",
    "MissingSeries",
    "SchemaMismatch",
    "load_payload",
    "__version__",
]
