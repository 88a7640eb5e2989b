"""Lexing, parsing and pretty-printing of MiniMove source."""

from .parser import parse_source
from .pretty import pretty_print

__all__ = ["parse_source", "pretty_print"]
