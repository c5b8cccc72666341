"""Question-answer generation against a chat-completions endpoint.

One request per chunk. The response is parsed with the numbered-item
grammar described in docs/qa-format.md; responses that yield no valid
pair are kept as discarded generation records rather than errors, since
a model answering off-format is an expected outcome, not a failure of
the pipeline.
"""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import requests

from .chunker import Chunk, compose_chunk_text, estimate_tokens
from .errors import (
    ContextOverflowError,
    EndpointError,
    NetworkError,
    TemplateError,
)

DEFAULT_PROMPT = 'Generate ten questions for a paper:"$TEXT"'

ENV_LLM_URL = "CORPUSFORGE_LLM_URL"
ENV_LLM_KEY = "CORPUSFORGE_LLM_KEY"


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt with exactly one $TEXT placeholder."""

    template: str = DEFAULT_PROMPT

    def __post_init__(self) -> None:
        count = self.template.count("$TEXT")
        if count != 1:
            raise TemplateError(
                f"template must contain exactly one $TEXT placeholder, found {count}"
            )

    def render(self, text: str) -> str:
        return self.template.replace("$TEXT", text)


def build_prompt(chunk: Chunk, template: PromptTemplate) -> str:
    """Fill the template with the chunk text, heading path included."""
    return template.render(compose_chunk_text(chunk))


@dataclass(frozen=True)
class EndpointConfig:
    """Connection settings for an OpenAI-style chat completions server."""

    base_url: str
    model: str
    api_key: str | None = None
    temperature: float = 0.7
    max_output_tokens: int = 2048
    context_tokens: int = 16384
    timeout: float = 120.0
    concurrency: int = 2

    @classmethod
    def from_env(cls, model: str, **overrides) -> "EndpointConfig":
        url = overrides.pop("base_url", None) or os.environ.get(ENV_LLM_URL)
        if not url:
            raise NetworkError(
                f"no endpoint configured; set {ENV_LLM_URL} or pass --llm-url"
            )
        key = overrides.pop("api_key", None) or os.environ.get(ENV_LLM_KEY)
        return cls(base_url=url, model=model, api_key=key, **overrides)


def request_generation(
    prompt: str,
    endpoint: EndpointConfig,
    session: requests.Session | None = None,
) -> str:
    """Send one chat-completion request and return the message text.

    The prompt's estimated size is checked against the context window
    before anything goes over the wire.
    """
    est = estimate_tokens(prompt) + endpoint.max_output_tokens
    if est > endpoint.context_tokens:
        raise ContextOverflowError(
            f"prompt needs ~{est} tokens but the context window is "
            f"{endpoint.context_tokens}",
            est_tokens=est,
            limit=endpoint.context_tokens,
        )
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"
    payload = {
        "model": endpoint.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_output_tokens,
    }
    http = session or requests
    try:
        resp = http.post(url, headers=headers, json=payload, timeout=endpoint.timeout)
    except requests.RequestException as exc:
        raise NetworkError(f"request to {url} failed: {exc}") from exc
    if resp.status_code != 200:
        raise EndpointError(resp.status_code, resp.text)
    try:
        data = resp.json()
        return data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise EndpointError(200, f"malformed response body: {resp.text[:200]}") from exc


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    chunk_id: str = ""
    source_id: str = ""


@dataclass(frozen=True)
class Discard:
    """A response rejected as a whole, with the first rule it broke."""

    reason: str


_QLINE = re.compile(r"^\s*(\d+)[.)]\s*(?:Q\s*:\s*)?(.*)$")
_ALINE = re.compile(r"^\s*(?:A|Answer)\s*:\s*(.*)$")


def parse_qa_response(
    raw: str, chunk_id: str = "", source_id: str = ""
) -> list[QAPair] | Discard:
    """Parse numbered question/answer items out of a model response.

    Returns the valid pairs, salvaging what can be salvaged, or a
    Discard carrying the first violation when nothing survives. The
    grammar is spelled out in docs/qa-format.md.
    """
    pairs: list[QAPair] = []
    first_violation: str | None = None
    question: str | None = None
    answer_lines: list[str] | None = None

    def violation(reason: str) -> None:
        nonlocal first_violation
        if first_violation is None:
            first_violation = reason

    def flush() -> None:
        nonlocal question, answer_lines
        if question is not None:
            if answer_lines is None:
                violation("missing_answer_line")
            else:
                answer = " ".join(
                    a for a in (s.strip() for s in answer_lines) if a
                )
                if answer:
                    pairs.append(
                        QAPair(
                            question=question,
                            answer=answer,
                            chunk_id=chunk_id,
                            source_id=source_id,
                        )
                    )
                else:
                    violation("empty_answer")
        question = None
        answer_lines = None

    for line in raw.split("\n"):
        if not line.strip():
            flush()
            continue
        qm = _QLINE.match(line)
        am = _ALINE.match(line)
        if qm and not am:
            flush()
            qtext = qm.group(2).strip()
            if qtext.endswith("?"):
                question = qtext
            else:
                violation("question_missing_question_mark")
            continue
        if am:
            if question is None:
                violation("answer_without_question")
            elif answer_lines is None:
                answer_lines = [am.group(1)]
            else:
                # a second answer line closes the item and is noise
                flush()
                violation("unexpected_answer_line")
            continue
        if question is not None and answer_lines is not None:
            answer_lines.append(line)
        elif question is not None:
            # prose between question and answer breaks the item
            flush()
        # other noise lines are ignored
    flush()

    if pairs:
        return pairs
    return Discard(first_violation or "no_numbered_items")


@dataclass(frozen=True)
class GenerationRecord:
    """Audit row for one chunk's generation attempt."""

    chunk_id: str
    source_id: str
    status: str  # "accepted" or "discarded"
    n_pairs: int = 0
    reason: str | None = None
    latency_ms: int = 0

    def to_json(self) -> str:
        d = {
            "chunk_id": self.chunk_id,
            "source_id": self.source_id,
            "status": self.status,
            "n_pairs": self.n_pairs,
            "latency_ms": self.latency_ms,
        }
        if self.reason is not None:
            d["reason"] = self.reason
        return json.dumps(d, sort_keys=True, ensure_ascii=False)


@dataclass
class GenerationOutcome:
    records: list[GenerationRecord] = field(default_factory=list)
    pairs: list[QAPair] = field(default_factory=list)
    skipped: int = 0
    errors: int = 0


def generate_for_chunks(
    chunks: Iterable[Chunk],
    endpoint: EndpointConfig,
    template: PromptTemplate | None = None,
    *,
    existing: Mapping[str, str] | None = None,
    on_record: Callable[[GenerationRecord], None] | None = None,
    on_pairs: Callable[[list[QAPair]], None] | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> GenerationOutcome:
    """Generate QA pairs for chunks, skipping already-processed ones.

    existing maps chunk_id to prior status; chunks present there are not
    re-requested, which is what makes reruns idempotent and offline.
    Endpoint failures for one chunk become discarded records so a flaky
    server cannot take down a long batch. Results keep chunk order.
    """
    template = template or PromptTemplate()
    existing = existing or {}
    outcome = GenerationOutcome()
    chunk_list = list(chunks)
    all_chunks = [c for c in chunk_list if c.chunk_id not in existing]
    outcome.skipped = len(chunk_list) - len(all_chunks)

    def work(chunk: Chunk) -> tuple[GenerationRecord, list[QAPair]]:
        prompt = build_prompt(chunk, template)
        start = clock()
        try:
            raw = request_generation(prompt, endpoint)
        except (NetworkError, EndpointError, ContextOverflowError) as exc:
            elapsed = int((clock() - start) * 1000)
            return (
                GenerationRecord(
                    chunk_id=chunk.chunk_id,
                    source_id=chunk.source_id,
                    status="discarded",
                    reason=f"{type(exc).__name__}: {exc}",
                    latency_ms=elapsed,
                ),
                [],
            )
        elapsed = int((clock() - start) * 1000)
        parsed = parse_qa_response(raw, chunk.chunk_id, chunk.source_id)
        if isinstance(parsed, Discard):
            return (
                GenerationRecord(
                    chunk_id=chunk.chunk_id,
                    source_id=chunk.source_id,
                    status="discarded",
                    reason=parsed.reason,
                    latency_ms=elapsed,
                ),
                [],
            )
        return (
            GenerationRecord(
                chunk_id=chunk.chunk_id,
                source_id=chunk.source_id,
                status="accepted",
                n_pairs=len(parsed),
                latency_ms=elapsed,
            ),
            parsed,
        )

    workers = max(1, endpoint.concurrency)
    if all_chunks:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for record, pairs in pool.map(work, all_chunks):
                outcome.records.append(record)
                outcome.pairs.extend(pairs)
                if record.status == "discarded" and record.reason and (
                    record.reason.startswith("NetworkError")
                    or record.reason.startswith("EndpointError")
                ):
                    outcome.errors += 1
                if on_record:
                    on_record(record)
                if on_pairs and pairs:
                    on_pairs(pairs)
    return outcome
