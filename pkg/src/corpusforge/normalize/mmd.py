"""MultiMarkdown block parser.

Turns OCR-style markdown into the canonical block list. The text is cut
into segments at blank lines (fenced code passes through whole), each
segment gets its math delimiters normalized to dollar form, and the
segment lines are then classified:

    #-prefixed line                  heading (level = number of hashes)
    $$-opening line(s)               display equation
    run of |-prefixed lines          pipe table, flattened
    bullet or numbered-item line     one paragraph per item
    run of lines with double spaces  already-flattened table
    anything else                    paragraph

Paragraph text is whitespace-collapsed onto a single line, which is what
makes render and re-parse meet in the middle: rendered paragraphs can
never be mistaken for tables or display math. A paragraph that is
exactly one inline math span becomes an equation_inline_span block.

Warning byte offsets refer to the newline-normalized input.
"""

from __future__ import annotations

import re

from .blocks import (
    Block,
    CanonicalDoc,
    NormalizeWarning,
    equation_display,
    equation_inline,
    heading,
    other,
    paragraph,
    table,
)
from .delimiters import _find_closer, convert_math_delimiters
from .tables import is_separator_row, split_pipe_row

_HEADING = re.compile(r"^(#{1,6})\s+(.*)$")
_BULLET = re.compile(r"^(?:[-*+]|\d{1,3}[.)])\s+\S")
_WS_RUN = re.compile(r"\s+")


def _collapse(text: str) -> str:
    return _WS_RUN.sub(" ", text).strip()


def _pure_inline_span(line: str) -> str | None:
    """Inner math when the line is exactly one $...$ span, else None."""
    if len(line) < 3 or not line.startswith("$") or line.startswith("$$"):
        return None
    end = _find_closer(line, 1, "$")
    if end == len(line) - 1:
        return line[1:-1]
    return None


def _finish_paragraph(lines: list[str], out: list[Block]) -> None:
    text = _collapse(" ".join(lines))
    if not text:
        return
    inner = _pure_inline_span(text)
    if inner is not None:
        out.append(equation_inline(inner))
    else:
        out.append(paragraph(text))


def _row_is_table_safe(row: str) -> bool:
    """True when a flattened row re-reads as a table row, not something else."""
    if "  " not in row:
        return False
    if row.startswith("|") or row.startswith("$$"):
        return False
    if _BULLET.match(row):
        return False
    return not _HEADING.match(row)


def _flatten_pipe_run(lines: list[str]) -> tuple[str, bool]:
    """Flatten a run of pipe rows; bool says whether it holds as a table."""
    rows: list[str] = []
    ok = True
    for line in lines:
        cells = split_pipe_row(line.strip())
        if is_separator_row(cells):
            continue
        if not cells:
            continue
        if len(cells) < 2:
            ok = False
        row = "  ".join(cells).strip()
        if row:
            rows.append(row)
    if not rows:
        return "", False
    if ok:
        ok = all(_row_is_table_safe(r) for r in rows)
    return "\n".join(rows), ok


def _classify_segment(seg: str, out: list[Block]) -> None:
    lines = seg.split("\n")
    para: list[str] = []
    j = 0
    n = len(lines)

    def flush_para() -> None:
        nonlocal para
        if para:
            _finish_paragraph(para, out)
            para = []

    while j < n:
        stripped = lines[j].strip()
        m = _HEADING.match(stripped)
        if m:
            flush_para()
            out.append(heading(_collapse(m.group(2)), len(m.group(1))))
            j += 1
            continue
        if stripped.startswith("$$"):
            if (
                len(stripped) >= 5
                and stripped.endswith("$$")
                and stripped[2:-2].strip()
            ):
                flush_para()
                out.append(equation_display(stripped[2:-2].strip()))
                j += 1
                continue
            # multi-line display: collect until a line ending with $$
            k = j + 1
            closed = False
            while k < n:
                if lines[k].strip().endswith("$$"):
                    closed = True
                    break
                k += 1
            if closed:
                flush_para()
                content = [stripped[2:].strip()]
                content += [lines[x].strip() for x in range(j + 1, k)]
                tail = lines[k].strip()
                content.append(tail[:-2].strip())
                inner = "\n".join(c for c in content if c)
                if inner:
                    out.append(equation_display(inner))
                else:
                    para.append(stripped)
                    para += [lines[x] for x in range(j + 1, k + 1)]
                    flush_para()
                j = k + 1
                continue
            # no closer in this segment: fall through to paragraph text
            para.append(lines[j])
            j += 1
            continue
        if stripped.startswith("|"):
            flush_para()
            k = j
            while k < n and lines[k].strip().startswith("|"):
                k += 1
            flat, is_table = _flatten_pipe_run(lines[j:k])
            if flat and is_table:
                out.append(table(flat))
            elif flat:
                _finish_paragraph(flat.split("\n"), out)
            j = k
            continue
        if _BULLET.match(stripped):
            # list items stand alone so their markers survive rendering
            flush_para()
            _finish_paragraph([stripped], out)
            j += 1
            continue
        if "  " in stripped:
            flush_para()
            k = j
            rows = []
            while k < n:
                row = lines[k].strip()
                if not _row_is_table_safe(row):
                    break
                rows.append(row)
                k += 1
            out.append(table("\n".join(rows)))
            j = k
            continue
        para.append(lines[j])
        j += 1
    flush_para()


def parse_mmd(text: str, source_id: str = "") -> CanonicalDoc:
    """Parse MultiMarkdown text into a canonical document."""
    norm = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = norm.split("\n")
    blocks: list[Block] = []
    warnings: list[NormalizeWarning] = []

    seg_lines: list[str] = []
    seg_start = 0

    def flush_segment() -> None:
        nonlocal seg_lines
        if not seg_lines:
            return
        seg = "\n".join(seg_lines)
        result = convert_math_delimiters(seg)
        if result.warning_offset is not None:
            base = len(norm[:seg_start].encode("utf-8"))
            warnings.append(
                NormalizeWarning(
                    source_id=source_id,
                    byte_offset=base + result.warning_offset,
                    message="unbalanced math delimiter; segment left unmodified",
                )
            )
        _classify_segment(result.text, blocks)
        seg_lines = []

    char_pos = 0
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.strip() == "":
            flush_segment()
            char_pos += len(line) + 1
            i += 1
            continue
        if line.lstrip().startswith("```"):
            flush_segment()
            fence = [line]
            char_pos += len(line) + 1
            i += 1
            while i < len(lines):
                fence.append(lines[i])
                done = lines[i].lstrip().startswith("```")
                char_pos += len(lines[i]) + 1
                i += 1
                if done:
                    break
            blocks.append(other("\n".join(fence)))
            continue
        if not seg_lines:
            seg_start = char_pos
        seg_lines.append(line)
        char_pos += len(line) + 1
        i += 1
    flush_segment()

    title = next(
        (b.text for b in blocks if b.kind == "heading" and b.level == 1), None
    )
    return CanonicalDoc(
        source_id=source_id, title=title, blocks=blocks, warnings=warnings
    )
