r"""LaTeX source conversion.

Turns a LaTeX article into the canonical block document. The converter
understands the structural subset that matters for prose corpora:

* sectioning commands become headings (section level 1, subsection 2,
  subsubsection 3, paragraph 4); chapters map to level 1
* math environments and ``\[ .. \]`` become display equation blocks;
  inline ``\( .. \)`` spans become ``$ .. $`` inside their paragraph
* figure and table environments reduce to a "Figure: caption" or
  "Table: caption" paragraph, plus a flattened plain-text table when a
  tabular body is present; graphics themselves are dropped
* itemize and enumerate items become one marker-prefixed paragraph each
* citations collapse to bracketed keys; verbatim bodies survive as
  fenced blocks; comments, labels and layout commands disappear

Unknown environments are transparent (their body is converted in
place); unknown macros keep their braced argument's text and lose their
name. An unrecoverable brace imbalance degrades the region to a plain
paragraph and records a warning. Warning byte offsets refer to the
comment-stripped source.

The final block list is produced by rendering the converted blocks and
re-parsing them with the markdown parser, so every document this module
emits re-parses to an equal block list by construction.
"""

from __future__ import annotations

import re

from ..errors import EncodingError
from .blocks import (
    Block,
    CanonicalDoc,
    NormalizeWarning,
    equation_display,
    heading,
    other,
    paragraph,
    table,
)
from .delimiters import _find_closer, convert_math_delimiters
from .mmd import parse_mmd
from .render import render_canonical

_WS_RUN = re.compile(r"\s+")

_HEADING_LEVELS = {
    "chapter": 1,
    "section": 1,
    "subsection": 2,
    "subsubsection": 3,
    "paragraph": 4,
    "subparagraph": 5,
}

_MARKER = re.compile(
    r"\\(?:chapter|subsubsection|subsection|section|subparagraph|paragraph)\*?\s*\{"
    r"|\\begin\s*\{([A-Za-z*]+)\}"
    r"|\\\["
)

_MACRO = re.compile(r"\\([A-Za-z]+)(\*?)")

_MATH_ENVS = {
    "equation", "equation*", "align", "align*", "alignat", "alignat*",
    "displaymath", "eqnarray", "eqnarray*", "gather", "gather*",
    "multline", "multline*", "flalign", "flalign*", "math",
}
_MEDIA_ENVS = {
    "figure", "figure*", "wrapfigure", "table", "table*",
    "sidewaystable", "sidewaysfigure",
}
_LIST_ENVS = {"itemize", "enumerate", "description"}
_VERBATIM_ENVS = {"verbatim", "Verbatim", "lstlisting", "alltt"}
_DROP_ENVS = {
    "tikzpicture", "algorithm", "algorithmic", "algorithm2e",
    "thebibliography", "filecontents", "filecontents*", "comment",
}
_TABULAR_ENVS = {"tabular", "tabular*", "tabularx", "longtable"}

_CITE_MACROS = {
    "cite", "citep", "citet", "citealp", "citealt", "citeauthor",
    "citeyear", "ref", "eqref", "autoref", "cref", "Cref", "pageref",
}

# name -> number of braced arguments consumed and discarded
_DROP_WITH_ARG = {
    "label": 1, "vspace": 1, "hspace": 1, "includegraphics": 1,
    "bibliography": 1, "bibliographystyle": 1, "usepackage": 1,
    "documentclass": 1, "input": 1, "include": 1, "setlength": 2,
    "newcommand": 2, "renewcommand": 2, "providecommand": 2,
    "newenvironment": 3, "pagestyle": 1, "thispagestyle": 1,
    "graphicspath": 1, "hypersetup": 1, "author": 1, "date": 1,
    "thanks": 1, "email": 1, "affiliation": 1, "institute": 1,
    "address": 1, "cline": 1, "phantom": 1, "vphantom": 1,
    "hphantom": 1, "begin": 1, "end": 1, "title": 1, "keywords": 1,
}

_DROP_BARE = {
    "maketitle", "centering", "raggedright", "raggedleft", "noindent",
    "clearpage", "newpage", "cleardoublepage", "tableofcontents",
    "listoffigures", "listoftables", "appendix", "hfill", "vfill",
    "smallskip", "medskip", "bigskip", "indent", "toprule", "midrule",
    "bottomrule", "hline", "footnotesize", "scriptsize", "small",
    "large", "Large", "LARGE", "huge", "Huge", "normalsize", "itshape",
    "bfseries", "ttfamily", "rmfamily", "sffamily", "em", "boldmath",
    "unboldmath", "relax", "item", "arraybackslash", "frontmatter",
    "mainmatter", "backmatter", "printbibliography", "sloppy",
}


class _Imbalance(Exception):
    def __init__(self, offset: int):
        super().__init__(f"unbalanced group at {offset}")
        self.offset = offset


def _collapse(text: str) -> str:
    return _WS_RUN.sub(" ", text).strip()


def _strip_comments(text: str) -> str:
    out_lines = []
    for line in text.split("\n"):
        kept = []
        i = 0
        while i < len(line):
            ch = line[i]
            if ch == "\\":
                kept.append(line[i : i + 2])
                i += 2
                continue
            if ch == "%":
                break
            kept.append(ch)
            i += 1
        out_lines.append("".join(kept))
    return "\n".join(out_lines)


def _read_group(text: str, i: int) -> tuple[str, int]:
    """Content of the braced group opening at text[i] and the index after it."""
    depth = 0
    j = i
    n = len(text)
    while j < n:
        ch = text[j]
        if ch == "\\":
            j += 2
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[i + 1 : j], j + 1
        j += 1
    raise _Imbalance(i)


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t\n":
        i += 1
    return i


def _skip_optional(text: str, i: int) -> int:
    j = _skip_ws(text, i)
    if j < len(text) and text[j] == "[":
        end = _find_closer(text, j + 1, "]")
        if end >= 0:
            return end + 1
    return i


def _find_env_end(text: str, name: str, start: int) -> tuple[int, int]:
    """(inner_end, after_end) for the environment opened before start."""
    pat = re.compile(r"\\(begin|end)\s*\{" + re.escape(name) + r"\}")
    depth = 1
    pos = start
    while True:
        m = pat.search(text, pos)
        if not m:
            raise _Imbalance(start)
        if m.group(1) == "begin":
            depth += 1
        else:
            depth -= 1
            if depth == 0:
                return m.start(), m.end()
        pos = m.end()


def _copy_math_span(text: str, i: int) -> tuple[str, int] | None:
    """Copy a $..$ or $$..$$ span starting at i, or None when unpaired."""
    if text.startswith("$$", i):
        end = _find_closer(text, i + 2, "$$")
        if end < 0:
            return None
        return text[i : end + 2], end + 2
    end = _find_closer(text, i + 1, "$")
    if end < 0:
        return None
    return text[i : end + 1], end + 1


def _inline(text: str) -> str:
    """Flatten prose-level LaTeX to plain text, leaving math spans alone."""
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "$":
            span = _copy_math_span(text, i)
            if span is None:
                out.append(ch)
                i += 1
            else:
                out.append(span[0])
                i = span[1]
            continue
        if ch == "\\":
            m = _MACRO.match(text, i)
            if m:
                name = m.group(1)
                i = m.end()
                if name in _CITE_MACROS:
                    i = _skip_optional(text, i)
                    i = _skip_optional(text, i)
                    j = _skip_ws(text, i)
                    if j < n and text[j] == "{":
                        keys, i = _read_group(text, j)
                        out.append("[" + _collapse(keys) + "]")
                elif name in ("multicolumn", "multirow"):
                    for _ in range(2):
                        j = _skip_ws(text, i)
                        if j < n and text[j] == "{":
                            _, i = _read_group(text, j)
                    j = _skip_ws(text, i)
                    if j < n and text[j] == "{":
                        arg, i = _read_group(text, j)
                        out.append(_inline(arg))
                elif name in _DROP_WITH_ARG:
                    count = _DROP_WITH_ARG[name]
                    i = _skip_optional(text, i)
                    for _ in range(count):
                        j = _skip_ws(text, i)
                        if j < n and text[j] == "{":
                            _, i = _read_group(text, j)
                        i = _skip_optional(text, i)
                elif name == "par":
                    out.append("\n\n")
                elif name == "footnote":
                    j = _skip_ws(text, i)
                    if j < n and text[j] == "{":
                        arg, i = _read_group(text, j)
                        out.append(" (" + _inline(arg).strip() + ")")
                elif name in ("newline", "linebreak"):
                    i = _skip_optional(text, i)
                    out.append("\n")
                elif name in ("quad", "qquad", "enspace", "thinspace"):
                    out.append(" ")
                elif name in _DROP_BARE:
                    i = _skip_optional(text, i)
                else:
                    # unknown macro: keep its argument text, lose the name
                    i = _skip_optional(text, i)
                    j = _skip_ws(text, i)
                    if j < n and text[j] == "{":
                        arg, i = _read_group(text, j)
                        out.append(_inline(arg))
                continue
            nxt = text[i + 1] if i + 1 < n else ""
            if nxt == "":
                i += 1
            elif nxt in "&%#_{}":
                out.append(nxt)
                i += 2
            elif nxt == "$":
                out.append("\\$")
                i += 2
            elif nxt == "\\":
                i += 2
                i = _skip_optional(text, i)
                out.append("\n")
            elif nxt in ",;:! ":
                out.append(" ")
                i += 2
            else:
                out.append(nxt)
                i += 2
            continue
        if ch in "{}":
            i += 1
            continue
        if ch == "~":
            out.append(" ")
            i += 1
            continue
        if ch == "`":
            if text.startswith("``", i):
                out.append('"')
                i += 2
            else:
                out.append("'")
                i += 1
            continue
        if ch == "'" and text.startswith("''", i):
            out.append('"')
            i += 2
            continue
        if ch == "-" and text.startswith("---", i):
            out.append("\u2014")
            i += 3
            continue
        if ch == "-" and text.startswith("--", i):
            out.append("\u2013")
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _split_rows(content: str) -> list[str]:
    """Split tabular content on top-level \\\\ row separators."""
    rows: list[str] = []
    cur: list[str] = []
    i = 0
    n = len(content)
    while i < n:
        ch = content[i]
        if ch == "\\" and content.startswith("\\\\", i):
            i += 2
            i = _skip_optional(content, i)
            rows.append("".join(cur))
            cur = []
            continue
        if ch == "\\":
            cur.append(content[i : i + 2])
            i += 2
            continue
        cur.append(ch)
        i += 1
    rows.append("".join(cur))
    return rows


def _split_cells(row: str) -> list[str]:
    cells: list[str] = []
    cur: list[str] = []
    i = 0
    n = len(row)
    while i < n:
        ch = row[i]
        if ch == "\\":
            cur.append(row[i : i + 2])
            i += 2
            continue
        if ch == "&":
            cells.append("".join(cur))
            cur = []
            i += 1
            continue
        cur.append(ch)
        i += 1
    cells.append("".join(cur))
    return cells


def _flatten_tabular(inner: str, env: str) -> str:
    i = _skip_ws(inner, 0)
    i = _skip_optional(inner, i)
    n_spec = 2 if env in ("tabular*", "tabularx") else 1
    for _ in range(n_spec):
        j = _skip_ws(inner, i)
        if j < len(inner) and inner[j] == "{":
            try:
                _, i = _read_group(inner, j)
            except _Imbalance:
                break
    lines = []
    for row in _split_rows(inner[i:]):
        cells = [
            _collapse(_inline(convert_math_delimiters(c).text))
            for c in _split_cells(row)
        ]
        if any(cells):
            lines.append("  ".join(cells).strip())
    return "\n".join(lines)


def _clean_display(inner: str) -> str:
    inner = re.sub(r"\\label\s*\{[^}]*\}", "", inner)
    lines = [l.strip() for l in inner.split("\n")]
    return "\n".join(l for l in lines if l)


def _fence(inner: str) -> str:
    lines = inner.strip("\n").split("\n")
    lines = [(" " + l) if l.lstrip().startswith("```") else l for l in lines]
    return "```\n" + "\n".join(lines) + "\n```"


class _Converter:
    def __init__(self, body: str, source_id: str):
        self.body = body
        self.source_id = source_id
        self.blocks: list[Block] = []
        self.warnings: list[NormalizeWarning] = []

    def warn(self, char_offset: int, message: str) -> None:
        byte_offset = len(self.body[:char_offset].encode("utf-8"))
        self.warnings.append(
            NormalizeWarning(
                source_id=self.source_id,
                byte_offset=byte_offset,
                message=message,
            )
        )

    def emit_prose(self, tex: str, base: int) -> None:
        if not tex.strip():
            return
        result = convert_math_delimiters(tex)
        if result.warning_offset is not None:
            local = len(tex.encode("utf-8")[: result.warning_offset].decode("utf-8"))
            self.warn(
                base + local,
                "unbalanced math delimiter in prose; left unconverted",
            )
        try:
            flat = _inline(result.text)
        except _Imbalance as exc:
            self.warn(base + min(exc.offset, len(tex)), "unbalanced braces; region kept as plain text")
            flat = result.text
        for piece in re.split(r"\n\s*\n", flat):
            text = _collapse(piece)
            if text:
                self.blocks.append(paragraph(text))

    def emit_display(self, inner: str) -> None:
        cleaned = _clean_display(inner)
        if cleaned:
            self.blocks.append(equation_display(cleaned))

    def emit_heading(self, name: str, arg: str) -> None:
        try:
            text = _collapse(_inline(convert_math_delimiters(arg).text))
        except _Imbalance:
            text = _collapse(arg)
        if text:
            self.blocks.append(heading(text, _HEADING_LEVELS[name]))

    def convert_media(self, env: str, inner: str, base: int) -> None:
        label = "Table" if "table" in env else "Figure"
        events: list[tuple[int, str, str]] = []
        for m in re.finditer(r"\\caption\s*", inner):
            j = _skip_optional(inner, m.end())
            j = _skip_ws(inner, j)
            if j < len(inner) and inner[j] == "{":
                try:
                    arg, _ = _read_group(inner, j)
                except _Imbalance:
                    continue
                events.append((m.start(), "caption", arg))
        for m in re.finditer(r"\\begin\s*\{(tabular\*?|tabularx|longtable)\}", inner):
            name = m.group(1)
            try:
                inner_end, _ = _find_env_end(inner, name, m.end())
            except _Imbalance:
                self.warn(base + m.start(), f"unterminated {name} inside {env}")
                continue
            events.append((m.start(), "tabular:" + name, inner[m.end() : inner_end]))
        events.sort(key=lambda e: e[0])
        for _, kind, payload in events:
            if kind == "caption":
                try:
                    text = _collapse(_inline(convert_math_delimiters(payload).text))
                except _Imbalance:
                    text = _collapse(payload)
                if text:
                    self.blocks.append(paragraph(f"{label}: {text}"))
            else:
                flat = _flatten_tabular(payload, kind.split(":", 1)[1])
                if flat:
                    self.blocks.append(table(flat))

    def convert_list(self, env: str, inner: str) -> None:
        ordered = env == "enumerate"
        parts = re.split(r"\\item\b", inner)
        idx = 0
        for part in parts[1:]:
            j = _skip_optional(part, 0)
            try:
                text = _collapse(_inline(convert_math_delimiters(part[j:]).text))
            except _Imbalance:
                text = _collapse(part[j:])
            if not text:
                continue
            idx += 1
            marker = f"{idx}." if ordered else "-"
            self.blocks.append(paragraph(f"{marker} {text}"))

    def scan(self, start: int, end: int) -> None:
        pos = start
        while pos < end:
            m = _MARKER.search(self.body, pos, end)
            if not m:
                self.emit_prose(self.body[pos:end], pos)
                return
            self.emit_prose(self.body[pos : m.start()], pos)
            token = m.group(0)
            if token == "\\[":
                close = _find_closer(self.body, m.end(), "\\]")
                if close < 0 or close >= end:
                    self.warn(m.start(), "display math never closes; remainder kept as prose")
                    self.emit_prose(self.body[m.end() : end], m.end())
                    return
                self.emit_display(self.body[m.end() : close])
                pos = close + 2
                continue
            if m.group(1):
                env = m.group(1)
                inner_start = m.end()
                try:
                    inner_end, after = _find_env_end(self.body, env, inner_start)
                except _Imbalance:
                    self.warn(m.start(), f"begin {env} without matching end")
                    pos = inner_start
                    continue
                if after > end:
                    # closes beyond our slice; treat as unmatched here
                    self.warn(m.start(), f"begin {env} without matching end")
                    pos = inner_start
                    continue
                inner = self.body[inner_start:inner_end]
                if env in _MATH_ENVS:
                    self.emit_display(inner)
                elif env in _TABULAR_ENVS:
                    flat = _flatten_tabular(inner, env)
                    if flat:
                        self.blocks.append(table(flat))
                elif env in _MEDIA_ENVS:
                    self.convert_media(env, inner, inner_start)
                elif env in _LIST_ENVS:
                    self.convert_list(env, inner)
                elif env in _VERBATIM_ENVS:
                    if inner.strip():
                        self.blocks.append(other(_fence(inner)))
                elif env in _DROP_ENVS:
                    pass
                else:
                    self.scan(inner_start, inner_end)
                pos = after
                continue
            # sectioning macro; the matched token ends at its opening brace
            name = _MACRO.match(token).group(1)
            try:
                arg, after = _read_group(self.body, m.end() - 1)
            except _Imbalance:
                self.warn(m.start(), "unbalanced braces in heading; remainder kept as prose")
                self.emit_prose(self.body[m.end() : end], m.end())
                return
            self.emit_heading(name, arg)
            pos = after


def _extract_title(text: str) -> str | None:
    m = re.search(r"\\title\s*", text)
    if not m:
        return None
    j = _skip_optional(text, m.end())
    j = _skip_ws(text, j)
    if j >= len(text) or text[j] != "{":
        return None
    try:
        arg, _ = _read_group(text, j)
    except _Imbalance:
        return None
    title = _collapse(_inline(convert_math_delimiters(arg).text))
    return title or None


def convert_latex_source(raw: str | bytes, source_id: str = "") -> CanonicalDoc:
    """Convert LaTeX source text into a canonical document."""
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"{source_id or 'input'}: not valid UTF-8") from exc
    text = _strip_comments(raw.replace("\r\n", "\n").replace("\r", "\n"))
    title = _extract_title(text)

    begin = re.search(r"\\begin\s*\{document\}", text)
    if begin:
        end_m = re.search(r"\\end\s*\{document\}", text)
        body_start = begin.end()
        body_end = end_m.start() if end_m else len(text)
    else:
        body_start, body_end = 0, len(text)

    conv = _Converter(text, source_id)
    conv.scan(body_start, body_end)

    # canonical fixpoint: re-parse the rendered blocks so the block list
    # is exactly what the markdown parser would produce for this text
    staged = CanonicalDoc(source_id=source_id, blocks=conv.blocks)
    final = parse_mmd(render_canonical(staged), source_id=source_id)
    final.title = title or final.title
    final.warnings = conv.warnings
    return final
