"""Assembly of the two training datasets and their statistics.

The unsupervised set (tp) carries whole documents for the paper and
proceedings families and chunk-sized slices for books; the supervised
set (tqa) carries deduplicated question-answer pairs. Records serialize
to JSON Lines with sorted keys so output files are byte-stable.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

from .chunker import DEFAULT_MAX_TOKENS, compose_chunk_text, split_sections
from .normalize.blocks import CanonicalDoc
from .normalize.render import render_canonical
from .qagen import QAPair

log = logging.getLogger(__name__)

CORPUS_ARXIV = "arxiv"
CORPUS_JACOW = "jacow"
CORPUS_BOOKS = "books"
ALL_CORPORA = frozenset({CORPUS_ARXIV, CORPUS_JACOW, CORPUS_BOOKS})


def _check_corpus(corpus: str) -> None:
    if corpus not in ALL_CORPORA:
        raise ValueError(
            f"unknown corpus {corpus!r}; expected one of {sorted(ALL_CORPORA)}"
        )


@dataclass(frozen=True)
class UnsupervisedRecord:
    """One text-prediction training sample."""

    text: str
    source_id: str
    corpus: str

    def __post_init__(self) -> None:
        _check_corpus(self.corpus)
        if not self.text:
            raise ValueError("unsupervised record text must be non-empty")
        if not self.source_id:
            raise ValueError("unsupervised record needs a source id")

    def to_json(self) -> str:
        return json.dumps(
            {
                "text": self.text,
                "source_id": self.source_id,
                "corpus": self.corpus,
            },
            sort_keys=True,
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class SupervisedRecord:
    """One question-answer training sample tied to its source chunk."""

    question: str
    answer: str
    source_id: str
    chunk_id: str
    corpus: str

    def __post_init__(self) -> None:
        _check_corpus(self.corpus)
        if not self.question or not self.question.endswith("?"):
            raise ValueError("supervised record question must end with '?'")
        if not self.answer:
            raise ValueError("supervised record answer must be non-empty")
        if not self.source_id or not self.chunk_id:
            raise ValueError("supervised record needs source and chunk ids")

    def to_json(self) -> str:
        return json.dumps(
            {
                "question": self.question,
                "answer": self.answer,
                "source_id": self.source_id,
                "chunk_id": self.chunk_id,
                "corpus": self.corpus,
            },
            sort_keys=True,
            ensure_ascii=False,
        )


def parse_unsupervised(line: str) -> UnsupervisedRecord:
    data = json.loads(line)
    return UnsupervisedRecord(
        text=data["text"], source_id=data["source_id"], corpus=data["corpus"]
    )


def parse_supervised(line: str) -> SupervisedRecord:
    data = json.loads(line)
    return SupervisedRecord(
        question=data["question"],
        answer=data["answer"],
        source_id=data["source_id"],
        chunk_id=data["chunk_id"],
        corpus=data["corpus"],
    )


def emit_tp(
    docs: Iterable[tuple[CanonicalDoc, str]],
    *,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> list[UnsupervisedRecord]:
    """Build unsupervised records from (document, corpus) pairs.

    arxiv and jacow documents become one record each with the full
    canonical rendering. Books become one record per section chunk, each
    prefixed with its heading path, because whole textbooks dwarf any
    usable context window. Empty documents are skipped with a warning.
    """
    records: list[UnsupervisedRecord] = []
    for doc, corpus in docs:
        _check_corpus(corpus)
        if not doc.blocks:
            log.warning("skipping empty document %s", doc.source_id)
            continue
        if corpus == CORPUS_BOOKS:
            for chunk in split_sections(doc, max_tokens=max_tokens):
                text = compose_chunk_text(chunk)
                if not text.strip():
                    continue
                records.append(
                    UnsupervisedRecord(
                        text=text, source_id=doc.source_id, corpus=corpus
                    )
                )
        else:
            text = render_canonical(doc)
            if not text.strip():
                log.warning("skipping empty document %s", doc.source_id)
                continue
            records.append(
                UnsupervisedRecord(
                    text=text, source_id=doc.source_id, corpus=corpus
                )
            )
    return records


def emit_tqa(
    pairs: Iterable[QAPair], corpus_by_source: Mapping[str, str]
) -> list[SupervisedRecord]:
    """Build supervised records from QA pairs, deduplicated exactly.

    Two pairs with the same (question, answer) text collapse to the
    first occurrence even when they came from different chunks.
    """
    records: list[SupervisedRecord] = []
    seen: set[tuple[str, str]] = set()
    for pair in pairs:
        key = (pair.question, pair.answer)
        if key in seen:
            continue
        seen.add(key)
        try:
            corpus = corpus_by_source[pair.source_id]
        except KeyError:
            raise ValueError(
                f"no corpus family known for source {pair.source_id!r}"
            ) from None
        records.append(
            SupervisedRecord(
                question=pair.question,
                answer=pair.answer,
                source_id=pair.source_id,
                chunk_id=pair.chunk_id,
                corpus=corpus,
            )
        )
    return records


def filter_by_keyword(
    records: Iterable[UnsupervisedRecord | SupervisedRecord],
    keyword: str,
    *,
    chunk_texts: Mapping[str, str] | None = None,
) -> list[UnsupervisedRecord | SupervisedRecord]:
    """Keep records containing the keyword as a case-sensitive substring.

    Unsupervised records match on their text. Supervised records match
    on question, answer, or (when chunk_texts maps their chunk_id) the
    chunk they were generated from. Input order is preserved.
    """
    if not keyword:
        raise ValueError("keyword must be non-empty")
    kept = []
    for record in records:
        if isinstance(record, UnsupervisedRecord):
            haystacks = (record.text,)
        else:
            looked_up = (
                chunk_texts.get(record.chunk_id, "") if chunk_texts else ""
            )
            haystacks = (record.question, record.answer, looked_up)
        if any(keyword in h for h in haystacks):
            kept.append(record)
    return kept


def keyword_variant(filename: str, keyword: str) -> str:
    """tp.jsonl + DESY -> tp.DESY.jsonl"""
    stem, dot, ext = filename.rpartition(".")
    if not dot:
        return f"{filename}.{keyword}"
    return f"{stem}.{keyword}.{ext}"


@dataclass(frozen=True)
class DatasetStats:
    total: int
    per_corpus_unsupervised: dict[str, int]
    per_corpus_supervised: dict[str, int]

    def __post_init__(self) -> None:
        expected = sum(self.per_corpus_unsupervised.values()) + sum(
            self.per_corpus_supervised.values()
        )
        if self.total != expected:
            raise ValueError(
                f"total {self.total} does not equal the per-corpus sum {expected}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "total": self.total,
                "per_corpus_unsupervised": self.per_corpus_unsupervised,
                "per_corpus_supervised": self.per_corpus_supervised,
            },
            sort_keys=True,
            indent=2,
        ) + "\n"


def compute_stats(
    tp_counts: Mapping[str, int], tqa_counts: Mapping[str, int]
) -> DatasetStats:
    """Combine per-corpus sample counts into one stats object."""
    for counts in (tp_counts, tqa_counts):
        for corpus, n in counts.items():
            _check_corpus(corpus)
            if n < 0:
                raise ValueError(f"negative count for {corpus}: {n}")
    return DatasetStats(
        total=sum(tp_counts.values()) + sum(tqa_counts.values()),
        per_corpus_unsupervised=dict(tp_counts),
        per_corpus_supervised=dict(tqa_counts),
    )


def write_jsonl(
    records: Iterable[UnsupervisedRecord | SupervisedRecord], path
) -> int:
    """Write records one JSON object per line; returns the line count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
            n += 1
    return n


def read_tp_jsonl(path) -> list[UnsupervisedRecord]:
    with open(path, encoding="utf-8") as fh:
        return [parse_unsupervised(line) for line in fh if line.strip()]


def read_tqa_jsonl(path) -> list[SupervisedRecord]:
    with open(path, encoding="utf-8") as fh:
        return [parse_supervised(line) for line in fh if line.strip()]


def _split_identity(record: UnsupervisedRecord | SupervisedRecord) -> str:
    if isinstance(record, UnsupervisedRecord):
        return record.source_id + "\x1f" + record.text
    return record.chunk_id + "\x1f" + record.question + "\x1f" + record.answer


def assign_split(
    record: UnsupervisedRecord | SupervisedRecord, val_fraction: float
) -> str:
    """Deterministic hash split: "train" or "val".

    The side depends only on the record's own content, never on input
    order, so membership is stable across runs and shuffles.
    """
    if not 0 <= val_fraction < 1:
        raise ValueError("val_fraction must be in [0, 1)")
    digest = hashlib.sha256(_split_identity(record).encode("utf-8")).digest()
    bucket = int.from_bytes(digest[:8], "big") / 2**64
    return "val" if bucket < val_fraction else "train"


def split_records(records, val_fraction: float):
    """Partition records into (train, val) lists preserving order."""
    train, val = [], []
    for record in records:
        if assign_split(record, val_fraction) == "val":
            val.append(record)
        else:
            train.append(record)
    return train, val
