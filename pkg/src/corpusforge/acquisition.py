"""Acquisition of corpus documents from the three source families.

Sources are declared in a JSONL list (one object per line). Fetched
payloads land under store/<family>/<id>.<ext> and every state change is
persisted to store/manifest.json, so an interrupted run resumes where
it stopped and a completed run touches the network zero times.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from urllib.parse import urlsplit
from xml.etree import ElementTree

import requests

from .errors import (
    ChecksumMismatchError,
    DuplicateIdError,
    NetworkError,
    ParseError,
    RateLimitedError,
)

FAMILY_ARXIV = "arxiv"
FAMILY_JACOW = "jacow"
FAMILY_BOOKS = "books"

# which payload formats each family may declare
FAMILY_FORMATS = {
    FAMILY_ARXIV: ("latex_archive", "pdf"),
    FAMILY_JACOW: ("pdf", "mmd"),
    FAMILY_BOOKS: ("pdf", "mmd"),
}

# file extension per payload format in the store
FORMAT_EXTENSIONS = {"latex_archive": "tex", "pdf": "pdf", "mmd": "mmd"}

STATE_PENDING = "pending"
STATE_FETCHED = "fetched"
STATE_FAILED = "failed"

MANIFEST_VERSION = 1

DEFAULT_ARXIV_API = "http://export.arxiv.org/api/query"

_ATOM_NS = "{http://www.w3.org/2005/Atom}"


@dataclass(frozen=True)
class SourceSpec:
    id: str
    family: str
    locator: str
    expected_format: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ParseError("source entry needs a non-empty id")
        if self.family not in FAMILY_FORMATS:
            raise ParseError(
                f"source {self.id!r}: unknown family {self.family!r}"
            )
        if not self.locator:
            raise ParseError(f"source {self.id!r}: locator must be non-empty")
        allowed = FAMILY_FORMATS[self.family]
        if self.expected_format not in allowed:
            raise ParseError(
                f"source {self.id!r}: family {self.family} allows formats "
                f"{allowed}, not {self.expected_format!r}"
            )
        if self.family == FAMILY_BOOKS and self.locator.startswith(
            ("http://", "https://")
        ):
            raise ParseError(
                f"source {self.id!r}: books are registered from local paths, "
                "never fetched over the network"
            )


def load_source_list(path) -> list[SourceSpec]:
    """Read a JSONL source list; one spec per non-blank line."""
    specs: list[SourceSpec] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                data = json.loads(line)
            except ValueError as exc:
                raise ParseError(
                    f"{path}:{lineno}: not valid JSON: {exc}"
                ) from exc
            if not isinstance(data, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            try:
                spec = SourceSpec(
                    id=data["id"],
                    family=data["family"],
                    locator=data["locator"],
                    expected_format=data["expected_format"],
                )
            except KeyError as exc:
                raise ParseError(
                    f"{path}:{lineno}: missing field {exc.args[0]!r}"
                ) from exc
            if spec.id in seen:
                raise DuplicateIdError(
                    f"{path}:{lineno}: duplicate source id {spec.id!r}"
                )
            seen.add(spec.id)
            specs.append(spec)
    return specs


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class ManifestEntry:
    spec: SourceSpec
    fetch_state: str = STATE_PENDING
    content_hash: str | None = None
    fetched_at: str | None = None


class SourceManifest:
    """Registry of sources and their fetch state, stored as JSON.

    Serialization is fully deterministic (entries sorted by id, sorted
    keys, fixed indentation) so re-saving unchanged state reproduces
    the file byte for byte.
    """

    def __init__(self, store_root) -> None:
        self.store_root = Path(store_root)
        self.path = self.store_root / "manifest.json"
        self.entries: dict[str, ManifestEntry] = {}

    @classmethod
    def load(cls, store_root) -> "SourceManifest":
        manifest = cls(store_root)
        if not manifest.path.exists():
            return manifest
        try:
            data = json.loads(manifest.path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ParseError(f"{manifest.path}: not valid JSON: {exc}") from exc
        if data.get("version") != MANIFEST_VERSION:
            raise ParseError(
                f"{manifest.path}: unsupported manifest version "
                f"{data.get('version')!r}"
            )
        for item in data.get("entries", []):
            spec = SourceSpec(
                id=item["id"],
                family=item["family"],
                locator=item["locator"],
                expected_format=item["expected_format"],
            )
            state = item.get("fetch_state", STATE_PENDING)
            content_hash = item.get("content_hash")
            if (state == STATE_FETCHED) != (content_hash is not None):
                raise ParseError(
                    f"{manifest.path}: entry {spec.id!r} violates the "
                    "hash-iff-fetched invariant"
                )
            manifest.entries[spec.id] = ManifestEntry(
                spec=spec,
                fetch_state=state,
                content_hash=content_hash,
                fetched_at=item.get("fetched_at"),
            )
        return manifest

    def serialize(self) -> str:
        items = []
        for source_id in sorted(self.entries):
            entry = self.entries[source_id]
            item = {
                "id": entry.spec.id,
                "family": entry.spec.family,
                "locator": entry.spec.locator,
                "expected_format": entry.spec.expected_format,
                "fetch_state": entry.fetch_state,
            }
            if entry.content_hash is not None:
                item["content_hash"] = entry.content_hash
            if entry.fetched_at is not None:
                item["fetched_at"] = entry.fetched_at
            items.append(item)
        payload = {"version": MANIFEST_VERSION, "entries": items}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def save(self) -> None:
        self.store_root.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".json.tmp")
        tmp.write_text(self.serialize(), encoding="utf-8")
        tmp.replace(self.path)

    def register(self, spec: SourceSpec) -> bool:
        """Add a source; True if it was new. Conflicting re-use of an id fails."""
        existing = self.entries.get(spec.id)
        if existing is not None:
            if existing.spec != spec:
                raise DuplicateIdError(
                    f"source id {spec.id!r} already registered with a "
                    "different spec"
                )
            return False
        self.entries[spec.id] = ManifestEntry(spec=spec)
        self.save()
        return True

    def store_path(self, spec: SourceSpec) -> Path:
        ext = FORMAT_EXTENSIONS[spec.expected_format]
        safe_id = spec.id.replace("/", "_")
        return self.store_root / spec.family / f"{safe_id}.{ext}"


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff: 1 s, 2 s, 4 s, ... up to max_attempts tries."""

    base_delay: float = 1.0
    factor: float = 2.0
    max_attempts: int = 5

    def delay(self, attempt: int) -> float:
        return self.base_delay * self.factor**attempt


RETRYABLE_STATUSES = frozenset({429, 502, 503, 504})


class RateLimiter:
    """At most one request per min_interval seconds per host."""

    def __init__(self, min_interval: float = 3.0, clock=time.monotonic, sleep=time.sleep):
        self.min_interval = min_interval
        self._clock = clock
        self._sleep = sleep
        self._last: dict[str, float] = {}
        self._lock = threading.Lock()

    def wait(self, host: str) -> None:
        while True:
            with self._lock:
                now = self._clock()
                last = self._last.get(host)
                if last is None or now - last >= self.min_interval:
                    self._last[host] = now
                    return
                pause = self.min_interval - (now - last)
            self._sleep(pause)


class HttpFetcher:
    """GET with retry, backoff, and per-host rate limiting."""

    def __init__(
        self,
        session: requests.Session | None = None,
        policy: RetryPolicy | None = None,
        limiter: RateLimiter | None = None,
        sleep=time.sleep,
        timeout: float = 60.0,
    ):
        self._session = session or requests.Session()
        self.policy = policy or RetryPolicy()
        self.limiter = limiter
        self._sleep = sleep
        self.timeout = timeout
        self.request_count = 0

    def get(self, url: str) -> bytes:
        host = urlsplit(url).netloc
        last_error: str = ""
        server_kept_refusing = False
        for attempt in range(self.policy.max_attempts):
            if self.limiter is not None:
                self.limiter.wait(host)
            self.request_count += 1
            retry_after: float | None = None
            try:
                resp = self._session.get(url, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"connection failed: {exc}"
                server_kept_refusing = False
            else:
                if resp.status_code == 200:
                    return resp.content
                if resp.status_code not in RETRYABLE_STATUSES:
                    raise NetworkError(
                        f"GET {url} returned HTTP {resp.status_code}",
                        status=resp.status_code,
                    )
                last_error = f"HTTP {resp.status_code}"
                server_kept_refusing = True
                header = resp.headers.get("Retry-After")
                if header is not None:
                    try:
                        retry_after = float(header)
                    except ValueError:
                        retry_after = None
            if attempt + 1 < self.policy.max_attempts:
                pause = self.policy.delay(attempt)
                if retry_after is not None:
                    pause = retry_after
                self._sleep(pause)
        message = (
            f"GET {url} still failing after {self.policy.max_attempts} "
            f"attempts ({last_error})"
        )
        if server_kept_refusing:
            raise RateLimitedError(message)
        raise NetworkError(message)


def _strip_version(arxiv_id: str) -> str:
    return re.sub(r"v\d+$", "", arxiv_id)


def list_arxiv_category(
    category: str,
    from_year: int,
    fetcher: HttpFetcher,
    *,
    base_url: str = DEFAULT_ARXIV_API,
    page_size: int = 100,
) -> list[SourceSpec]:
    """List archive articles in a category submitted in from_year or later.

    Pages through the Atom feed until a short page signals the end.
    Version suffixes are stripped from article ids so re-listing after
    a revision does not duplicate entries.
    """
    if not category:
        raise ValueError("category must be non-empty")
    if from_year < 1991:
        raise ValueError("from_year predates the archive itself")
    specs: list[SourceSpec] = []
    seen: set[str] = set()
    start = 0
    while True:
        url = (
            f"{base_url}?search_query=cat:{category}"
            f"&start={start}&max_results={page_size}"
        )
        body = fetcher.get(url)
        try:
            feed = ElementTree.fromstring(body)
        except ElementTree.ParseError as exc:
            raise ParseError(f"archive listing is not valid XML: {exc}") from exc
        entries = feed.findall(f"{_ATOM_NS}entry")
        for entry in entries:
            id_el = entry.find(f"{_ATOM_NS}id")
            published_el = entry.find(f"{_ATOM_NS}published")
            if id_el is None or not (id_el.text or "").strip():
                continue
            id_url = id_el.text.strip()
            published = (published_el.text or "") if published_el is not None else ""
            try:
                year = int(published[:4])
            except ValueError:
                continue
            if year < from_year:
                continue
            tail = _strip_version(id_url.rsplit("/", 1)[-1])
            if tail in seen:
                continue
            seen.add(tail)
            if "/abs/" in id_url:
                locator = _strip_version(id_url).replace("/abs/", "/e-print/")
            else:
                locator = tail
            specs.append(
                SourceSpec(
                    id=tail,
                    family=FAMILY_ARXIV,
                    locator=locator,
                    expected_format="latex_archive",
                )
            )
        if len(entries) < page_size:
            return specs
        start += len(entries)


def _now_iso(now) -> str:
    return datetime.fromtimestamp(now(), tz=timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


class _NullLock:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def fetch_document(
    spec: SourceSpec,
    manifest: SourceManifest,
    fetcher: HttpFetcher | None = None,
    *,
    now=time.time,
    lock=None,
) -> str:
    """Fetch one source into the store; returns the outcome.

    "verified" means the entry was already fetched and its stored bytes
    still match the recorded hash, with no network involved. "fetched"
    means a payload was downloaded (or copied, for books) and recorded.
    """
    lock = lock if lock is not None else _NullLock()
    entry = manifest.entries.get(spec.id)
    if entry is None:
        raise ParseError(f"source {spec.id!r} is not registered")
    dest = manifest.store_path(spec)

    if entry.fetch_state == STATE_FETCHED and dest.exists():
        actual = sha256_bytes(dest.read_bytes())
        if actual != entry.content_hash:
            raise ChecksumMismatchError(spec.id, entry.content_hash, actual)
        return "verified"

    try:
        if spec.family == FAMILY_BOOKS:
            source = Path(spec.locator)
            if not source.exists():
                raise NetworkError(
                    f"book source {spec.locator!r} does not exist"
                )
            body = source.read_bytes()
        else:
            if fetcher is None:
                raise NetworkError(
                    f"source {spec.id!r} needs a network fetch but no "
                    "fetcher was provided"
                )
            body = fetcher.get(spec.locator)
    except (NetworkError, OSError) as exc:
        with lock:
            entry.fetch_state = STATE_FAILED
            entry.content_hash = None
            entry.fetched_at = None
            manifest.save()
        if isinstance(exc, OSError):
            raise NetworkError(f"reading {spec.locator!r} failed: {exc}") from exc
        raise

    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_bytes(body)
    with lock:
        entry.fetch_state = STATE_FETCHED
        entry.content_hash = sha256_bytes(body)
        entry.fetched_at = _now_iso(now)
        manifest.save()
    return "fetched"


def fetch_all(
    manifest: SourceManifest,
    fetcher: HttpFetcher | None = None,
    *,
    concurrency: int = 4,
    now=time.time,
) -> dict[str, int]:
    """Fetch every registered source, a bounded number at a time.

    Store paths are disjoint by id uniqueness, so downloads parallelize
    freely; manifest mutation goes through one lock. Per-source errors
    are counted, not raised, so one dead link cannot stop a batch.
    """
    lock = threading.Lock()
    counts = {"fetched": 0, "verified": 0, "failed": 0}
    specs = [entry.spec for entry in manifest.entries.values()]

    def work(spec: SourceSpec) -> str:
        try:
            return fetch_document(
                spec, manifest, fetcher, now=now, lock=lock
            )
        except (NetworkError, ChecksumMismatchError):
            return "failed"

    if specs:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            for outcome in pool.map(work, specs):
                counts[outcome] += 1
    return counts
