"""Figure regeneration for swiptsec experiment CSV results."""

from .render import FIGURE_IDS, FigureSpec, RenderError, render

__all__ = ["FIGURE_IDS", "FigureSpec", "RenderError", "render"]

__version__ = "0.1.0"
