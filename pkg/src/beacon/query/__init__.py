"""Statement language: parser, binder, optimizer, compiler, and scalar eval."""

from .parser import parse, parse_expr
from .render import render

__all__ = ["parse", "parse_expr", "render"]
