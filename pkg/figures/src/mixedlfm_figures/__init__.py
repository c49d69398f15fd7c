"""Figure rendering for mixedlfm effects reports (file-format consumer only)."""

from .render import FigureSpec, build_figure, load_report, main, render

__version__ = "0.1.0"
