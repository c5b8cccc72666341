"""Canonical document model.

A document is a flat list of typed blocks. The block list is the unit of
equality everywhere: two documents are the same document iff their block
lists compare equal, regardless of how the surrounding metadata (title,
warnings) differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

KIND_HEADING = "heading"
KIND_PARAGRAPH = "paragraph"
KIND_EQUATION_INLINE = "equation_inline_span"
KIND_EQUATION_DISPLAY = "equation_display"
KIND_TABLE = "table"
KIND_OTHER = "other"

ALL_KINDS = (
    KIND_HEADING,
    KIND_PARAGRAPH,
    KIND_EQUATION_INLINE,
    KIND_EQUATION_DISPLAY,
    KIND_TABLE,
    KIND_OTHER,
)


@dataclass(frozen=True)
class Block:
    """One structural unit of a canonical document.

    level is meaningful only for headings (1..6) and is 0 otherwise.
    For equation blocks, text holds the LaTeX body without delimiters.
    For tables, text holds the flattened plain-text form.
    """

    kind: str
    text: str
    level: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown block kind: {self.kind!r}")
        if self.kind == KIND_HEADING and not 1 <= self.level <= 6:
            raise ValueError(f"heading level out of range: {self.level}")
        if self.kind != KIND_HEADING and self.level != 0:
            raise ValueError("level is only meaningful for headings")


@dataclass(frozen=True)
class NormalizeWarning:
    """Non-fatal problem hit while normalizing one document."""

    source_id: str
    byte_offset: int
    message: str


@dataclass
class CanonicalDoc:
    """A normalized document: ordered blocks plus optional title.

    Warnings ride along for the sidecar log but are excluded from equality,
    as is the source id; identity of content is the block list and title.
    """

    source_id: str = field(compare=False, default="")
    title: str | None = None
    blocks: list[Block] = field(default_factory=list)
    warnings: list[NormalizeWarning] = field(compare=False, default_factory=list)


def heading(text: str, level: int) -> Block:
    return Block(kind=KIND_HEADING, text=text, level=level)


def paragraph(text: str) -> Block:
    return Block(kind=KIND_PARAGRAPH, text=text)


def equation_inline(text: str) -> Block:
    return Block(kind=KIND_EQUATION_INLINE, text=text)


def equation_display(text: str) -> Block:
    return Block(kind=KIND_EQUATION_DISPLAY, text=text)


def table(text: str) -> Block:
    return Block(kind=KIND_TABLE, text=text)


def other(text: str) -> Block:
    return Block(kind=KIND_OTHER, text=text)
