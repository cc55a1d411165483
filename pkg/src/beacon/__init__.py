"""Active data engine: feeds in, periodic shared channels out."""

from .engine import Engine

__version__ = "0.1.0"
__all__ = ["Engine", "__version__"]
