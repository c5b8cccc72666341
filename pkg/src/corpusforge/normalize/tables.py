"""Table flattening.

Markup tables (pipe-delimited markdown or +--- grid rules) become plain
text: one line per row, cells trimmed and joined with two spaces.
Separator rows vanish. Input that does not look like a table is returned
unchanged, so the function is safe to call on arbitrary text.
"""

from __future__ import annotations

import re

_PIPE_SEP_CELL = re.compile(r"^:?-{2,}:?$|^:?-:?$")
_GRID_RULE = re.compile(r"^[+\-=]+$")


def split_pipe_row(line: str) -> list[str]:
    """Cells of one pipe-table row, trimmed.

    Leading and trailing empty fields produced by outer pipes are
    dropped; interior empty cells are kept.
    """
    fields = line.split("|")
    if fields and fields[0].strip() == "":
        fields = fields[1:]
    if fields and fields[-1].strip() == "":
        fields = fields[:-1]
    return [f.strip() for f in fields]


def is_separator_row(cells: list[str]) -> bool:
    return bool(cells) and all(_PIPE_SEP_CELL.match(c) for c in cells)


def flatten_table(markup: str) -> str:
    """Flatten a markup table to aligned plain text rows.

    Rows come out as cell values joined by two spaces. When no line of
    the input parses as a table row, the input is returned unchanged.
    """
    lines = markup.splitlines()
    out: list[str] = []
    saw_row = False
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if _GRID_RULE.match(stripped):
            saw_row = True
            continue
        if "|" in stripped:
            cells = split_pipe_row(stripped)
            if is_separator_row(cells):
                saw_row = True
                continue
            if cells:
                out.append("  ".join(cells))
                saw_row = True
            continue
        out.append(stripped)
    if not saw_row:
        return markup
    return "\n".join(out)
