"""Command-line entry point for the corpus pipeline.

Stages are exposed individually (acquire, normalize, generate,
assemble, manifest, stats) and as one resumable run (pipeline).
Settings resolve with precedence: command-line flag, then environment
variable, then --config JSON file, then built-in default.

Exit codes: 0 success, 1 partial (some items failed but outputs are
usable), 2 configuration error. Log lines go to stderr; data and
summaries go to stdout or files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .acquisition import (
    HttpFetcher,
    RateLimiter,
    SourceManifest,
    fetch_all,
    load_source_list,
)
from .chunker import (
    DEFAULT_MAX_TOKENS,
    Chunk,
    split_sections,
    whole_doc_chunk,
)
from .dataset import (
    compute_stats,
    emit_tp,
    emit_tqa,
    filter_by_keyword,
    keyword_variant,
    read_tp_jsonl,
    read_tqa_jsonl,
    split_records,
    write_jsonl,
)
from .errors import CorpusForgeError, EmptyDocumentError
from .manifest import TrainConfig, write_manifest
from .normalize import (
    CanonicalDoc,
    convert_latex_source,
    parse_mmd,
    render_canonical,
)
from .qagen import (
    ENV_LLM_KEY,
    ENV_LLM_URL,
    EndpointConfig,
    PromptTemplate,
    QAPair,
    compose_chunk_text,
    generate_for_chunks,
)

ENV_STORE = "CORPUSFORGE_STORE"

QA_FAMILIES = ("books", "jacow")  # arxiv feeds the unsupervised set only

_DEFAULTS = {
    "store": "store",
    "output_dir": "out",
    "source_list": None,
    "max_tokens": DEFAULT_MAX_TOKENS,
    "llm_url": None,
    "llm_key": None,
    "model": "vicuna-7b-16k-v1.5",
    "concurrency": 2,
    "context_tokens": 16384,
    "max_output_tokens": 2048,
    "rate_interval": 3.0,
    "filter_keyword": None,
    "val_fraction": 0.0,
}


def _log(stage: str, level: str, message: str) -> None:
    ts = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    print(f"{ts} {stage} {level} {message}", file=sys.stderr)


@dataclass
class Settings:
    store: Path
    output_dir: Path
    source_list: Path | None
    max_tokens: int
    llm_url: str | None
    llm_key: str | None
    model: str
    concurrency: int
    context_tokens: int
    max_output_tokens: int
    rate_interval: float
    filter_keyword: str | None
    val_fraction: float
    dry_run: bool

    @property
    def normalized_dir(self) -> Path:
        return self.output_dir / "normalized"


def resolve_settings(args: argparse.Namespace) -> Settings:
    cfg = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise CorpusForgeError(f"cannot read config file: {exc}") from exc
        except ValueError as exc:
            raise CorpusForgeError(
                f"config file is not valid JSON: {exc}"
            ) from exc
        if not isinstance(cfg, dict):
            raise CorpusForgeError("config file must hold a JSON object")

    env_for = {
        "store": ENV_STORE,
        "llm_url": ENV_LLM_URL,
        "llm_key": ENV_LLM_KEY,
    }

    def pick(name, cast=None):
        value = getattr(args, name, None)
        if value is None and name in env_for:
            value = os.environ.get(env_for[name]) or None
        if value is None:
            value = cfg.get(name)
        if value is None:
            value = _DEFAULTS[name]
        if value is not None and cast is not None:
            value = cast(value)
        return value

    source_list = pick("source_list")
    return Settings(
        store=Path(pick("store")),
        output_dir=Path(pick("output_dir")),
        source_list=Path(source_list) if source_list else None,
        max_tokens=pick("max_tokens", int),
        llm_url=pick("llm_url"),
        llm_key=pick("llm_key"),
        model=pick("model"),
        concurrency=pick("concurrency", int),
        context_tokens=pick("context_tokens", int),
        max_output_tokens=pick("max_output_tokens", int),
        rate_interval=pick("rate_interval", float),
        filter_keyword=pick("filter_keyword"),
        val_fraction=pick("val_fraction", float),
        dry_run=bool(getattr(args, "dry_run", False)),
    )


def _make_fetcher(settings: Settings) -> HttpFetcher:
    limiter = (
        RateLimiter(settings.rate_interval)
        if settings.rate_interval > 0
        else None
    )
    return HttpFetcher(limiter=limiter)


def cmd_acquire(settings: Settings) -> int:
    if settings.source_list is None:
        _log("acquire", "error", "no source list given (--source-list)")
        return 2
    if not settings.source_list.exists():
        _log(
            "acquire", "error",
            f"source list {settings.source_list} does not exist",
        )
        return 2
    specs = load_source_list(settings.source_list)
    if settings.dry_run:
        print(f"would register {len(specs)} sources into {settings.store}")
        return 0
    manifest = SourceManifest.load(settings.store)
    for spec in specs:
        manifest.register(spec)
    counts = fetch_all(
        manifest, _make_fetcher(settings), concurrency=4
    )
    _log(
        "acquire", "info",
        f"store={settings.store} fetched={counts['fetched']} "
        f"verified={counts['verified']} failed={counts['failed']}",
    )
    print(
        f"{counts['fetched']} fetched, {counts['verified']} verified, "
        f"{counts['failed']} failed"
    )
    return 1 if counts["failed"] else 0


def _store_inputs(settings: Settings) -> list[tuple[Path, str]]:
    """(path, family) pairs for every normalizable file in the store."""
    found = []
    if not settings.store.exists():
        return found
    for family_dir in sorted(settings.store.iterdir()):
        if not family_dir.is_dir():
            continue
        for path in sorted(family_dir.iterdir()):
            if path.suffix in (".mmd", ".tex", ".pdf"):
                found.append((path, family_dir.name))
    return found


def cmd_normalize(settings: Settings) -> int:
    inputs = _store_inputs(settings)
    workable = [(p, f) for p, f in inputs if p.suffix != ".pdf"]
    if settings.dry_run:
        print(f"would normalize {len(workable)} files from {settings.store}")
        return 0
    out_root = settings.normalized_dir
    warnings = []
    ok = 0
    failed = 0
    for path, family in inputs:
        if path.suffix == ".pdf":
            _log(
                "normalize", "info",
                f"skipping {path.name}: pdf needs external OCR first",
            )
            continue
        source_id = path.stem
        try:
            if path.suffix == ".tex":
                doc = convert_latex_source(path.read_bytes(), source_id)
            else:
                doc = parse_mmd(
                    path.read_text(encoding="utf-8"), source_id=source_id
                )
        except (CorpusForgeError, UnicodeDecodeError) as exc:
            _log("normalize", "error", f"{path.name}: {exc}")
            failed += 1
            continue
        dest = out_root / family / f"{source_id}.md"
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(render_canonical(doc) + "\n", encoding="utf-8")
        warnings.extend(doc.warnings)
        ok += 1
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "warnings.jsonl", "w", encoding="utf-8") as fh:
        for w in warnings:
            fh.write(
                json.dumps(
                    {
                        "byte_offset": w.byte_offset,
                        "message": w.message,
                        "source_id": w.source_id,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
    _log(
        "normalize", "info",
        f"normalized={ok} failed={failed} warnings={len(warnings)}",
    )
    print(f"{ok} normalized, {failed} failed")
    if failed and ok == 0:
        return 1
    return 0


def _normalized_docs(settings: Settings) -> list[tuple[CanonicalDoc, str]]:
    root = settings.normalized_dir
    if not root.exists():
        raise CorpusForgeError(
            f"{root} does not exist; run the normalize stage first"
        )
    docs = []
    for family_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for path in sorted(family_dir.glob("*.md")):
            doc = parse_mmd(
                path.read_text(encoding="utf-8"), source_id=path.stem
            )
            docs.append((doc, family_dir.name))
    return docs


def _qa_chunks(settings: Settings, docs) -> list[Chunk]:
    chunks: list[Chunk] = []
    for doc, family in docs:
        if family not in QA_FAMILIES:
            continue
        try:
            if family == "books":
                chunks.extend(split_sections(doc, settings.max_tokens))
            else:
                chunks.append(whole_doc_chunk(doc))
        except EmptyDocumentError:
            _log("generate", "warning", f"{doc.source_id}: empty, skipped")
    return chunks


def _existing_chunk_ids(qa_raw_path: Path) -> dict[str, str]:
    existing: dict[str, str] = {}
    if qa_raw_path.exists():
        with open(qa_raw_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    existing[record["chunk_id"]] = record["status"]
    return existing


def _pair_json(pair: QAPair) -> str:
    return json.dumps(
        {
            "question": pair.question,
            "answer": pair.answer,
            "chunk_id": pair.chunk_id,
            "source_id": pair.source_id,
        },
        sort_keys=True,
        ensure_ascii=False,
    )


def cmd_generate(settings: Settings) -> int:
    if settings.dry_run:
        if not settings.normalized_dir.exists():
            print("would request QA for chunks from the normalize output")
            return 0
        docs = _normalized_docs(settings)
        chunks = _qa_chunks(settings, docs)
        existing = _existing_chunk_ids(settings.output_dir / "qa_raw.jsonl")
        pending = [c for c in chunks if c.chunk_id not in existing]
        print(
            f"would request QA for {len(pending)} chunks "
            f"({len(chunks) - len(pending)} already done)"
        )
        return 0
    if not settings.llm_url:
        _log(
            "generate", "error",
            f"no endpoint configured; set {ENV_LLM_URL} or pass --llm-url",
        )
        return 2
    docs = _normalized_docs(settings)
    chunks = _qa_chunks(settings, docs)
    qa_raw_path = settings.output_dir / "qa_raw.jsonl"
    existing = _existing_chunk_ids(qa_raw_path)
    endpoint = EndpointConfig(
        base_url=settings.llm_url,
        model=settings.model,
        api_key=settings.llm_key,
        context_tokens=settings.context_tokens,
        max_output_tokens=settings.max_output_tokens,
        concurrency=settings.concurrency,
    )
    settings.output_dir.mkdir(parents=True, exist_ok=True)
    pairs_path = settings.output_dir / "qa_pairs.jsonl"
    with open(qa_raw_path, "a", encoding="utf-8") as raw_fh, open(
        pairs_path, "a", encoding="utf-8"
    ) as pairs_fh:

        def on_record(record):
            raw_fh.write(record.to_json() + "\n")
            raw_fh.flush()
            if record.reason and record.reason.startswith(
                "ContextOverflowError"
            ):
                _log(
                    "generate", "warning",
                    f"{record.chunk_id}: exceeds the context window, skipped",
                )

        def on_pairs(pairs):
            for pair in pairs:
                pairs_fh.write(_pair_json(pair) + "\n")
            pairs_fh.flush()

        outcome = generate_for_chunks(
            chunks,
            endpoint,
            PromptTemplate(),
            existing=existing,
            on_record=on_record,
            on_pairs=on_pairs,
        )
    accepted = sum(1 for r in outcome.records if r.status == "accepted")
    discarded = len(outcome.records) - accepted
    _log(
        "generate", "info",
        f"chunks={len(chunks)} skipped={outcome.skipped} accepted={accepted} "
        f"discarded={discarded} errors={outcome.errors} "
        f"pairs={len(outcome.pairs)}",
    )
    print(
        f"{len(outcome.pairs)} pairs from {accepted} chunks "
        f"({outcome.skipped} skipped, {outcome.errors} errors)"
    )
    return 1 if outcome.errors else 0


def _read_qa_pairs(path: Path) -> list[QAPair]:
    pairs = []
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    pairs.append(
                        QAPair(
                            question=d["question"],
                            answer=d["answer"],
                            chunk_id=d["chunk_id"],
                            source_id=d["source_id"],
                        )
                    )
    return pairs


def cmd_assemble(settings: Settings) -> int:
    if settings.dry_run:
        if not settings.normalized_dir.exists():
            print("would assemble tp.jsonl and tqa.jsonl")
            return 0
        docs = _normalized_docs(settings)
        pairs = _read_qa_pairs(settings.output_dir / "qa_pairs.jsonl")
        print(
            f"would assemble tp.jsonl from {len(docs)} documents and "
            f"tqa.jsonl from {len(pairs)} pairs"
        )
        return 0
    docs = _normalized_docs(settings)
    pairs = _read_qa_pairs(settings.output_dir / "qa_pairs.jsonl")
    corpus_by_source = {doc.source_id: family for doc, family in docs}
    tp_records = emit_tp(docs, max_tokens=settings.max_tokens)
    tqa_records = emit_tqa(pairs, corpus_by_source)

    out = settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    tp_main, tqa_main = tp_records, tqa_records
    if settings.val_fraction > 0:
        tp_main, tp_val = split_records(tp_records, settings.val_fraction)
        tqa_main, tqa_val = split_records(tqa_records, settings.val_fraction)
        write_jsonl(tp_val, out / "tp.val.jsonl")
        write_jsonl(tqa_val, out / "tqa.val.jsonl")
    write_jsonl(tp_main, out / "tp.jsonl")
    write_jsonl(tqa_main, out / "tqa.jsonl")

    if settings.filter_keyword:
        keyword = settings.filter_keyword
        chunk_texts = {
            c.chunk_id: compose_chunk_text(c)
            for c in _qa_chunks(settings, docs)
        }
        write_jsonl(
            filter_by_keyword(tp_records, keyword),
            out / keyword_variant("tp.jsonl", keyword),
        )
        write_jsonl(
            filter_by_keyword(tqa_records, keyword, chunk_texts=chunk_texts),
            out / keyword_variant("tqa.jsonl", keyword),
        )

    tp_counts: dict[str, int] = {}
    for record in tp_records:
        tp_counts[record.corpus] = tp_counts.get(record.corpus, 0) + 1
    tqa_counts: dict[str, int] = {}
    for record in tqa_records:
        tqa_counts[record.corpus] = tqa_counts.get(record.corpus, 0) + 1
    stats = compute_stats(tp_counts, tqa_counts)
    (out / "stats.json").write_text(stats.to_json(), encoding="utf-8")
    _log(
        "assemble", "info",
        f"tp={len(tp_records)} tqa={len(tqa_records)} total={stats.total}",
    )
    print(f"{stats.total} samples ({len(tp_records)} tp, {len(tqa_records)} tqa)")
    return 0


def cmd_manifest(settings: Settings, args: argparse.Namespace) -> int:
    overrides = {}
    for field_name in (
        "base_model",
        "lora_rank",
        "lora_alpha",
        "per_device_batch",
        "grad_accum",
        "epochs",
        "learning_rate",
    ):
        value = getattr(args, field_name, None)
        if value is not None:
            overrides[field_name] = value
    config = TrainConfig(**overrides)
    path = settings.output_dir / "train_manifest.json"
    if settings.dry_run:
        print(f"would write {path}")
        return 0
    settings.output_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(config, path)
    _log("manifest", "info", f"wrote {path}")
    print(str(path))
    return 0


def cmd_stats(settings: Settings) -> int:
    tp_path = settings.output_dir / "tp.jsonl"
    tqa_path = settings.output_dir / "tqa.jsonl"
    if not tp_path.exists() or not tqa_path.exists():
        _log(
            "stats", "error",
            f"{tp_path} or {tqa_path} missing; run assemble first",
        )
        return 2
    tp_counts: dict[str, int] = {}
    for record in read_tp_jsonl(tp_path):
        tp_counts[record.corpus] = tp_counts.get(record.corpus, 0) + 1
    tqa_counts: dict[str, int] = {}
    for record in read_tqa_jsonl(tqa_path):
        tqa_counts[record.corpus] = tqa_counts.get(record.corpus, 0) + 1
    print(compute_stats(tp_counts, tqa_counts).to_json(), end="")
    return 0


def cmd_pipeline(settings: Settings, args: argparse.Namespace) -> int:
    worst = 0
    stages = [("acquire", lambda: cmd_acquire(settings))]
    if settings.source_list is None:
        _log("pipeline", "info", "no source list; using the store as-is")
        stages = []
    stages += [
        ("normalize", lambda: cmd_normalize(settings)),
        ("generate", lambda: cmd_generate(settings)),
        ("assemble", lambda: cmd_assemble(settings)),
        ("manifest", lambda: cmd_manifest(settings, args)),
    ]
    for name, run in stages:
        _log("pipeline", "info", f"stage {name} starting")
        code = run()
        _log("pipeline", "info", f"stage {name} finished with code {code}")
        if code == 2:
            return 2
        worst = max(worst, code)
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corpusforge",
        description=(
            "Build normalized corpora, QA pairs, and training datasets "
            "from raw scientific publications."
        ),
    )
    parser.add_argument("--config", help="JSON settings file")
    parser.add_argument("--store", help="document store root")
    parser.add_argument("--output-dir", dest="output_dir", help="output root")
    parser.add_argument(
        "--dry-run",
        dest="dry_run",
        action="store_true",
        help="print planned actions without side effects",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    acquire = sub.add_parser("acquire", help="fetch sources into the store")
    acquire.add_argument("--source-list", dest="source_list")
    acquire.add_argument("--rate-interval", dest="rate_interval", type=float)

    sub.add_parser("normalize", help="convert store files to canonical text")

    generate = sub.add_parser("generate", help="request QA pairs per chunk")
    sub.add_parser("stats", help="print dataset statistics")

    assemble = sub.add_parser("assemble", help="write tp/tqa/stats files")

    manifest = sub.add_parser("manifest", help="write the fine-tune manifest")

    pipeline = sub.add_parser("pipeline", help="run all stages in order")
    pipeline.add_argument("--source-list", dest="source_list")
    pipeline.add_argument("--rate-interval", dest="rate_interval", type=float)

    for p in (generate, pipeline):
        p.add_argument("--llm-url", dest="llm_url")
        p.add_argument("--llm-key", dest="llm_key")
        p.add_argument("--model")
        p.add_argument("--concurrency", type=int)
        p.add_argument(
            "--context-tokens", dest="context_tokens", type=int
        )
    for p in (generate, assemble, pipeline):
        p.add_argument("--max-tokens", dest="max_tokens", type=int)
    for p in (assemble, pipeline):
        p.add_argument("--filter-keyword", dest="filter_keyword")
        p.add_argument("--val-fraction", dest="val_fraction", type=float)
    for p in (manifest, pipeline):
        p.add_argument("--base-model", dest="base_model")
        p.add_argument("--lora-rank", dest="lora_rank", type=int)
        p.add_argument("--lora-alpha", dest="lora_alpha", type=int)
        p.add_argument("--per-device-batch", dest="per_device_batch", type=int)
        p.add_argument("--grad-accum", dest="grad_accum", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = resolve_settings(args)
        if args.command == "acquire":
            return cmd_acquire(settings)
        if args.command == "normalize":
            return cmd_normalize(settings)
        if args.command == "generate":
            return cmd_generate(settings)
        if args.command == "assemble":
            return cmd_assemble(settings)
        if args.command == "manifest":
            return cmd_manifest(settings, args)
        if args.command == "stats":
            return cmd_stats(settings)
        if args.command == "pipeline":
            return cmd_pipeline(settings, args)
    except CorpusForgeError as exc:
        _log(args.command, "error", str(exc))
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
