"""Canonical text rendering.

The inverse of parsing: blocks out, markdown-style text in dollar form
back. Rendering then re-parsing a document yields the same block list.
"""

from __future__ import annotations

from .blocks import (
    KIND_EQUATION_DISPLAY,
    KIND_EQUATION_INLINE,
    KIND_HEADING,
    Block,
    CanonicalDoc,
)


def render_block(block: Block) -> str:
    if block.kind == KIND_HEADING:
        return "#" * block.level + " " + block.text
    if block.kind == KIND_EQUATION_INLINE:
        return "$" + block.text + "$"
    if block.kind == KIND_EQUATION_DISPLAY:
        if "\n" in block.text:
            return "$$\n" + block.text + "\n$$"
        return "$$" + block.text + "$$"
    return block.text


def render_canonical(doc: CanonicalDoc) -> str:
    """Render a document to canonical text, blocks separated by blank lines."""
    return "\n\n".join(render_block(b) for b in doc.blocks)
