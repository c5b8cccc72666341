r"""Equation delimiter conversion.

Rewrites LaTeX-style math delimiters into dollar form in one
left-to-right pass:

    \( body \)   becomes   $ body $
    \[ body \]   becomes   $$ body $$

Scan rules, applied in this order at each position:

* A backslash followed by any character is an escape pair. Unless the
  pair is one of the four delimiter tokens above it is copied verbatim,
  so ``\\[5pt]`` stays a line break with an optional argument and ``\$``
  never starts a dollar span.
* ``\(`` converts up to the nearest following ``\)``; likewise ``\[`` up
  to the nearest ``\]``. The body is copied as-is except that any
  unescaped ``$`` inside it is rewritten to ``\$``, so the emitted span
  re-reads as a single unit. An empty body produces nothing. A closer
  with no pending opener is literal text.
* Existing dollar math is copied verbatim: ``$$`` up to the next ``$$``,
  a single ``$`` up to the next unescaped ``$``.
* Escape pairs are honoured while searching for every closer.
* A single ``$`` with no closing partner is literal text, provided no
  conversion happens later in the input. If one would, the pairing of
  the emitted dollars becomes ambiguous, so the input counts as
  unbalanced at the lone ``$``.
* An unbalanced input (dangling ``\(``, ``\[`` or ``$$``, or the lone
  ``$`` case above) is returned unmodified and the result carries the
  byte offset of the offending character.

Applying the conversion to its own output changes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class DelimiterResult:
    """Outcome of one conversion pass.

    warning_offset is the byte offset (UTF-8) of the unbalanced opener
    when the input was returned unmodified for that reason, else None.
    """

    text: str
    changed: bool
    warning_offset: int | None = None


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _find_closer(text: str, start: int, closer: str) -> int:
    """Index of the next closer token at or after start, or -1.

    Escape pairs are skipped, so an escaped character never opens or
    closes anything.
    """
    closer_is_pair = closer[0] == "\\"
    i = start
    n = len(text)
    while i < n:
        if text[i] == "\\":
            if closer_is_pair and text.startswith(closer, i):
                return i
            i += 2
            continue
        if not closer_is_pair and text.startswith(closer, i):
            return i
        i += 1
    return -1


def _escape_dollars(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            out.append(body[i : i + 2])
            i += 2
        elif ch == "$":
            out.append("\\$")
            i += 1
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def convert_math_delimiters(text: str) -> DelimiterResult:
    """Convert LaTeX math delimiters to dollar form per the module rules."""
    out: list[str] = []
    i = 0
    n = len(text)
    changed = False
    lone_dollar_at: int | None = None
    while i < n:
        ch = text[i]
        if ch == "\\":
            nxt = text[i + 1] if i + 1 < n else ""
            if nxt in "([":
                closer = "\\)" if nxt == "(" else "\\]"
                end = _find_closer(text, i + 2, closer)
                if end < 0:
                    return DelimiterResult(text, False, _byte_offset(text, i))
                if lone_dollar_at is not None:
                    return DelimiterResult(
                        text, False, _byte_offset(text, lone_dollar_at)
                    )
                body = _escape_dollars(text[i + 2 : end])
                if body:
                    dollars = "$" if nxt == "(" else "$$"
                    out.append(dollars + body + dollars)
                changed = True
                i = end + 2
            else:
                out.append(text[i : i + 2])
                i += 2
            continue
        if ch == "$":
            if text.startswith("$$", i):
                end = _find_closer(text, i + 2, "$$")
                if end < 0:
                    return DelimiterResult(text, False, _byte_offset(text, i))
                out.append(text[i : end + 2])
                i = end + 2
            else:
                end = _find_closer(text, i + 1, "$")
                if end < 0:
                    if lone_dollar_at is None:
                        lone_dollar_at = i
                    out.append(ch)
                    i += 1
                else:
                    out.append(text[i : end + 1])
                    i = end + 1
            continue
        out.append(ch)
        i += 1
    return DelimiterResult("".join(out), changed, None)


def normalize_equation_delimiters(text: str) -> str:
    """Convenience wrapper returning only the converted text."""
    return convert_math_delimiters(text).text
