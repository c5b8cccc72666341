"""Dataset loading: JSONL records to tokenized training examples.

Plain-text records train on every token. QA records render as a
single-turn chat transcript:

    User: {question}
    Assistant: {answer}

and the loss is masked so only the assistant's answer tokens count;
the question is context, not a prediction target.

Examples longer than the manifest's context window are truncated from
the left (the end of a document matters more than its start for
next-token training) and the count of truncated examples is reported.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .errors import SchemaError
from .manifest import TrainManifest
from .model import encode, encode_prefix_len

log = logging.getLogger(__name__)

IGNORE_INDEX = -100

USER_PREFIX = "User: "
ASSISTANT_PREFIX = "\nAssistant: "


@dataclass(frozen=True)
class Example:
    """Token ids plus per-position labels (IGNORE_INDEX = no loss)."""

    ids: tuple[int, ...]
    labels: tuple[int, ...]
    kind: str  # "text" or "qa"


@dataclass
class LoadResult:
    examples: list[Example]
    truncated: int


def render_transcript(question: str, answer: str) -> str:
    return f"{USER_PREFIX}{question}{ASSISTANT_PREFIX}{answer}"


def _text_example(text: str) -> Example:
    ids = encode(text)
    return Example(ids=tuple(ids), labels=tuple(ids), kind="text")


def _qa_example(question: str, answer: str) -> Example:
    prompt = f"{USER_PREFIX}{question}{ASSISTANT_PREFIX}"
    ids = encode(prompt + answer)
    masked = encode_prefix_len(prompt)
    labels = [IGNORE_INDEX] * masked + list(ids[masked:])
    return Example(ids=tuple(ids), labels=tuple(labels), kind="qa")


def _truncate_left(example: Example, limit: int) -> Example:
    if len(example.ids) <= limit:
        return example
    return Example(
        ids=example.ids[-limit:],
        labels=example.labels[-limit:],
        kind=example.kind,
    )


def _parse_line(path, lineno: int, line: str, fields: tuple[str, ...]):
    try:
        record = json.loads(line)
    except ValueError as exc:
        raise SchemaError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise SchemaError(f"{path}:{lineno}: expected a JSON object")
    for name in fields:
        if name not in record:
            raise SchemaError(f"{path}:{lineno}: missing field {name!r}")
        if not isinstance(record[name], str):
            raise SchemaError(f"{path}:{lineno}: field {name!r} must be "
                              "a string")
        if not record[name].strip():
            raise SchemaError(f"{path}:{lineno}: field {name!r} is empty")
    return record


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield lineno, line


def load_training_data(
    tp_path, tqa_path, manifest: TrainManifest, *, mixing: str = "interleave"
) -> LoadResult:
    """Load both datasets and merge them into one example stream.

    mixing "interleave" spreads the two streams uniformly through each
    other (the default); "sequential" keeps all plain-text examples
    first, then all QA examples.
    """
    text_examples = []
    for lineno, line in _iter_jsonl(tp_path):
        record = _parse_line(tp_path, lineno, line, ("text",))
        text_examples.append(_text_example(record["text"]))
    qa_examples = []
    for lineno, line in _iter_jsonl(tqa_path):
        record = _parse_line(tqa_path, lineno, line, ("question", "answer"))
        qa_examples.append(_qa_example(record["question"], record["answer"]))

    merged = _merge(text_examples, qa_examples, mixing)

    truncated = 0
    limit = manifest.context_tokens
    out = []
    for example in merged:
        clipped = _truncate_left(example, limit)
        if clipped is not example:
            truncated += 1
        out.append(clipped)
    if truncated:
        log.warning(
            "%d of %d examples exceeded the %d-token context and were "
            "truncated from the left",
            truncated, len(out), limit,
        )
    return LoadResult(examples=out, truncated=truncated)


def _merge(
    first: list[Example], second: list[Example], mixing: str
) -> list[Example]:
    if mixing == "sequential":
        return first + second
    if mixing != "interleave":
        raise ValueError(f"unknown mixing mode {mixing!r}")
    total = len(first) + len(second)
    merged = []
    i = j = 0
    for k in range(total):
        # pick the stream lagging behind its proportional share
        if j >= len(second) or (
            i < len(first) and i * total <= k * len(first)
        ):
            merged.append(first[i])
            i += 1
        else:
            merged.append(second[j])
            j += 1
    return merged
