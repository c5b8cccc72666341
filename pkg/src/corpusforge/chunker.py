"""Section-aware chunking of canonical documents.

A chunk is a contiguous run of non-heading blocks plus the heading path
that encloses it. Splitting happens at level-1 sections first; a section
whose rendered body would blow the token budget is split again at its
level-2 subsections, and a subsection still over budget is packed block
by block. A single indivisible block larger than the budget becomes its
own chunk, flagged oversized.

Token counts are estimated as ceil(characters / 4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import EmptyDocumentError
from .normalize.blocks import KIND_HEADING, Block, CanonicalDoc
from .normalize.render import render_block, render_canonical

DEFAULT_MAX_TOKENS = 12000


def estimate_tokens(text: str) -> int:
    """Crude length-based token estimate: one token per four characters."""
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    source_id: str
    heading_path: tuple[str, ...]
    text: str
    est_tokens: int
    oversized: bool = False


def compose_chunk_text(chunk: Chunk) -> str:
    """Chunk text with its heading path rendered back in front.

    This is the form handed to prompt building and to per-chunk dataset
    records, so the model sees where in the document the text sits.
    """
    lines = [
        "#" * (i + 1) + " " + h for i, h in enumerate(chunk.heading_path)
    ]
    if lines and chunk.text:
        return "\n".join(lines) + "\n\n" + chunk.text
    if lines:
        return "\n".join(lines)
    return chunk.text


def _render_body(blocks: list[Block]) -> str:
    return "\n\n".join(render_block(b) for b in blocks)


@dataclass
class _Group:
    heading_path: tuple[str, ...]
    blocks: list[Block] = field(default_factory=list)


def _split_at_level(blocks: list[Block], level: int, base_path: tuple[str, ...]) -> list[_Group]:
    groups = [_Group(heading_path=base_path)]
    for block in blocks:
        if block.kind == KIND_HEADING and block.level == level:
            groups.append(_Group(heading_path=base_path + (block.text,)))
        else:
            groups[-1].blocks.append(block)
    return [g for g in groups if g.blocks]


def split_sections(doc: CanonicalDoc, max_tokens: int = DEFAULT_MAX_TOKENS) -> list[Chunk]:
    """Chunk a document at section granularity under a token budget.

    Raises EmptyDocumentError for a document with no blocks. Heading
    blocks never appear inside chunk text; the enclosing headings are
    carried in heading_path instead.
    """
    if not doc.blocks:
        raise EmptyDocumentError(f"document {doc.source_id!r} has no blocks")
    chunks: list[Chunk] = []
    ordinal = 0

    def emit(path: tuple[str, ...], text: str) -> None:
        nonlocal ordinal
        if not text:
            return
        est = estimate_tokens(text)
        chunks.append(
            Chunk(
                chunk_id=f"{doc.source_id}#{ordinal:04d}",
                source_id=doc.source_id,
                heading_path=path,
                text=text,
                est_tokens=est,
                # anything emitted over budget was indivisible at this level
                oversized=est > max_tokens,
            )
        )
        ordinal += 1

    for section in _split_at_level(doc.blocks, 1, ()):
        body_blocks = [b for b in section.blocks if b.kind != KIND_HEADING]
        body = _render_body(body_blocks)
        if estimate_tokens(body) <= max_tokens:
            emit(section.heading_path, body)
            continue
        for sub in _split_at_level(section.blocks, 2, section.heading_path):
            sub_body_blocks = [b for b in sub.blocks if b.kind != KIND_HEADING]
            sub_body = _render_body(sub_body_blocks)
            if estimate_tokens(sub_body) <= max_tokens:
                emit(sub.heading_path, sub_body)
            else:
                pack_run: list[Block] = []
                for block in sub_body_blocks:
                    candidate = pack_run + [block]
                    if (
                        estimate_tokens(_render_body(candidate)) > max_tokens
                        and pack_run
                    ):
                        emit(sub.heading_path, _render_body(pack_run))
                        pack_run = [block]
                    else:
                        pack_run = candidate
                if pack_run:
                    emit(sub.heading_path, _render_body(pack_run))
    return chunks


def whole_doc_chunk(doc: CanonicalDoc) -> Chunk:
    """The entire document as one chunk, headings kept in the text."""
    if not doc.blocks:
        raise EmptyDocumentError(f"document {doc.source_id!r} has no blocks")
    text = render_canonical(doc)
    return Chunk(
        chunk_id=f"{doc.source_id}#0000",
        source_id=doc.source_id,
        heading_path=(),
        text=text,
        est_tokens=estimate_tokens(text),
    )
