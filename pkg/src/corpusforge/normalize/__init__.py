"""Normalization: raw source text to canonical block documents."""

from .blocks import (
    ALL_KINDS,
    KIND_EQUATION_DISPLAY,
    KIND_EQUATION_INLINE,
    KIND_HEADING,
    KIND_OTHER,
    KIND_PARAGRAPH,
    KIND_TABLE,
    Block,
    CanonicalDoc,
    NormalizeWarning,
)
from .delimiters import (
    DelimiterResult,
    convert_math_delimiters,
    normalize_equation_delimiters,
)
from .latex import convert_latex_source
from .mmd import parse_mmd
from .render import render_block, render_canonical
from .tables import flatten_table

__all__ = [
    "ALL_KINDS",
    "KIND_EQUATION_DISPLAY",
    "KIND_EQUATION_INLINE",
    "KIND_HEADING",
    "KIND_OTHER",
    "KIND_PARAGRAPH",
    "KIND_TABLE",
    "Block",
    "CanonicalDoc",
    "NormalizeWarning",
    "DelimiterResult",
    "convert_math_delimiters",
    "normalize_equation_delimiters",
    "convert_latex_source",
    "parse_mmd",
    "render_block",
    "render_canonical",
    "flatten_table",
]
