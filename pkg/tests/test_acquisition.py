"""Tests for source lists, the fetch manifest, retries, and the archive client."""

import hashlib
import json
import random

import pytest

import http_mock
from corpusforge.acquisition import (
    HttpFetcher,
    RateLimiter,
    RetryPolicy,
    SourceManifest,
    SourceSpec,
    fetch_all,
    fetch_document,
    list_arxiv_category,
    load_source_list,
    sha256_bytes,
)
from corpusforge.errors import (
    ChecksumMismatchError,
    DuplicateIdError,
    NetworkError,
    ParseError,
    RateLimitedError,
)


class FakeTime:
    """A clock that only moves when something sleeps on it."""

    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def clock(self):
        return self.now

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now += seconds


def _fetcher(ft=None, **kwargs):
    ft = ft or FakeTime()
    return HttpFetcher(sleep=ft.sleep, **kwargs), ft


# --- source specs and source lists -----------------------------------------


def test_source_spec_accepts_valid_combinations():
    SourceSpec("a1", "arxiv", "http://x/e-print/a1", "latex_archive")
    SourceSpec("j1", "jacow", "http://x/j1.mmd", "mmd")
    SourceSpec("b1", "books", "/data/book.mmd", "mmd")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"id": "", "family": "arxiv", "locator": "x", "expected_format": "pdf"},
        {"id": "a", "family": "blog", "locator": "x", "expected_format": "pdf"},
        {"id": "a", "family": "arxiv", "locator": "", "expected_format": "pdf"},
        {"id": "a", "family": "arxiv", "locator": "x", "expected_format": "mmd"},
        {"id": "a", "family": "books", "locator": "http://x/b", "expected_format": "mmd"},
    ],
)
def test_source_spec_rejects_bad_fields(kwargs):
    with pytest.raises(ParseError):
        SourceSpec(**kwargs)


def test_load_source_list(tmp_path):
    path = tmp_path / "sources.jsonl"
    path.write_text(
        "# corpus sources\n"
        '{"id": "2001.00001", "family": "arxiv", "locator": "http://h/e-print/2001.00001", "expected_format": "latex_archive"}\n'
        "\n"
        '{"id": "bk1", "family": "books", "locator": "/data/b.mmd", "expected_format": "mmd"}\n',
        encoding="utf-8",
    )
    specs = load_source_list(path)
    assert [s.id for s in specs] == ["2001.00001", "bk1"]
    assert specs[0].family == "arxiv"


def test_load_source_list_empty_file(tmp_path):
    path = tmp_path / "sources.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_source_list(path) == []


def test_load_source_list_duplicate_id(tmp_path):
    path = tmp_path / "sources.jsonl"
    line = '{"id": "a1", "family": "jacow", "locator": "http://h/a1.mmd", "expected_format": "mmd"}\n'
    path.write_text(line + line, encoding="utf-8")
    with pytest.raises(DuplicateIdError):
        load_source_list(path)


@pytest.mark.parametrize(
    "content",
    [
        "{broken json\n",
        '["list", "not", "object"]\n',
        '{"id": "a", "family": "jacow", "locator": "http://h"}\n',
    ],
)
def test_load_source_list_malformed(tmp_path, content):
    path = tmp_path / "sources.jsonl"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ParseError) as excinfo:
        load_source_list(path)
    assert ":1:" in str(excinfo.value)  # line number included


# --- manifest persistence ---------------------------------------------------


def _spec(i=0, family="jacow", fmt="mmd", locator=None):
    return SourceSpec(
        id=f"src{i}",
        family=family,
        locator=locator or f"http://host/doc{i}.mmd",
        expected_format=fmt,
    )


def test_manifest_register_persists_and_loads_back(tmp_path):
    manifest = SourceManifest(tmp_path / "store")
    assert manifest.register(_spec(0)) is True
    assert manifest.register(_spec(1)) is True
    assert manifest.register(_spec(0)) is False  # identical re-registration

    loaded = SourceManifest.load(tmp_path / "store")
    assert sorted(loaded.entries) == ["src0", "src1"]
    assert loaded.entries["src0"].spec == _spec(0)
    assert loaded.entries["src0"].fetch_state == "pending"


def test_manifest_conflicting_id_rejected(tmp_path):
    manifest = SourceManifest(tmp_path / "store")
    manifest.register(_spec(0))
    with pytest.raises(DuplicateIdError):
        manifest.register(_spec(0, locator="http://other/place.mmd"))


def test_manifest_serialization_is_byte_stable(tmp_path):
    manifest = SourceManifest(tmp_path / "store")
    manifest.register(_spec(1))
    manifest.register(_spec(0))
    first = manifest.path.read_bytes()
    manifest.save()
    assert manifest.path.read_bytes() == first
    data = json.loads(first)
    assert data["version"] == 1
    assert [e["id"] for e in data["entries"]] == ["src0", "src1"]


def test_manifest_load_rejects_bad_version(tmp_path):
    store = tmp_path / "store"
    store.mkdir()
    (store / "manifest.json").write_text(
        '{"version": 99, "entries": []}', encoding="utf-8"
    )
    with pytest.raises(ParseError):
        SourceManifest.load(store)


def test_manifest_load_rejects_hash_state_mismatch(tmp_path):
    store = tmp_path / "store"
    store.mkdir()
    entry = {
        "id": "x",
        "family": "jacow",
        "locator": "http://h/x.mmd",
        "expected_format": "mmd",
        "fetch_state": "fetched",
    }
    (store / "manifest.json").write_text(
        json.dumps({"version": 1, "entries": [entry]}), encoding="utf-8"
    )
    with pytest.raises(ParseError):
        SourceManifest.load(store)


def test_store_path_layout(tmp_path):
    manifest = SourceManifest(tmp_path / "store")
    spec = SourceSpec("hep-ex/0401001", "arxiv", "http://h/e", "latex_archive")
    path = manifest.store_path(spec)
    assert path == tmp_path / "store" / "arxiv" / "hep-ex_0401001.tex"
    assert manifest.store_path(_spec(3)).name == "src3.mmd"


# --- rate limiting and retries ----------------------------------------------


def test_rate_limiter_spaces_requests_per_host():
    ft = FakeTime()
    limiter = RateLimiter(3.0, clock=ft.clock, sleep=ft.sleep)
    limiter.wait("a")
    assert ft.sleeps == []
    limiter.wait("a")
    assert ft.sleeps == [3.0]
    limiter.wait("b")  # a different host is not delayed
    assert ft.sleeps == [3.0]
    ft.now += 10.0
    limiter.wait("a")
    assert ft.sleeps == [3.0]


def test_retry_policy_delay_schedule():
    policy = RetryPolicy()
    assert [policy.delay(i) for i in range(4)] == [1.0, 2.0, 4.0, 8.0]
    assert policy.max_attempts == 5


def test_fetcher_returns_body_on_success():
    with http_mock.http_server(lambda p, q: (200, {}, b"hello")) as (url, server):
        fetcher, ft = _fetcher()
        assert fetcher.get(url + "/doc") == b"hello"
    assert fetcher.request_count == 1
    assert ft.sleeps == []


def test_fetcher_exhausts_backoff_on_persistent_503():
    with http_mock.http_server(lambda p, q: (503, {}, b"busy")) as (url, server):
        fetcher, ft = _fetcher()
        with pytest.raises(RateLimitedError):
            fetcher.get(url + "/doc")
        assert len(server.requests) == 5  # the full retry budget
    assert ft.sleeps == [1.0, 2.0, 4.0, 8.0]


def test_fetcher_recovers_after_transient_errors():
    state = {"n": 0}

    def respond(path, query):
        state["n"] += 1
        if state["n"] <= 2:
            return 503, {}, b""
        return 200, {}, b"finally"

    with http_mock.http_server(respond) as (url, _):
        fetcher, ft = _fetcher()
        assert fetcher.get(url + "/doc") == b"finally"
    assert ft.sleeps == [1.0, 2.0]


def test_fetcher_honors_retry_after_header():
    state = {"n": 0}

    def respond(path, query):
        state["n"] += 1
        if state["n"] == 1:
            return 429, {"Retry-After": "7"}, b""
        return 200, {}, b"ok"

    with http_mock.http_server(respond) as (url, _):
        fetcher, ft = _fetcher()
        assert fetcher.get(url + "/doc") == b"ok"
    assert ft.sleeps == [7.0]


def test_fetcher_fails_fast_on_non_retryable_status():
    with http_mock.http_server(lambda p, q: (404, {}, b"gone")) as (url, server):
        fetcher, ft = _fetcher()
        with pytest.raises(NetworkError) as excinfo:
            fetcher.get(url + "/doc")
        assert len(server.requests) == 1
    assert excinfo.value.status == 404
    assert not isinstance(excinfo.value, RateLimitedError)
    assert ft.sleeps == []


def test_fetcher_uses_rate_limiter_between_requests():
    ft = FakeTime()
    limiter = RateLimiter(3.0, clock=ft.clock, sleep=ft.sleep)
    with http_mock.http_server(lambda p, q: (200, {}, b"x")) as (url, _):
        fetcher = HttpFetcher(limiter=limiter, sleep=ft.sleep)
        fetcher.get(url + "/a")
        fetcher.get(url + "/b")
    assert ft.sleeps == [3.0]


# --- archive listing ---------------------------------------------------------


def _atom(entries):
    parts = ['<?xml version="1.0" encoding="UTF-8"?>']
    parts.append('<feed xmlns="http://www.w3.org/2005/Atom">')
    for id_url, published in entries:
        parts.append(
            f"<entry><id>{id_url}</id>"
            f"<published>{published}</published>"
            "<title>t</title></entry>"
        )
    parts.append("</feed>")
    return "\n".join(parts)


def _listing_responder(items, page_size_param=True):
    """Serve items (id_url, published) honoring start/max_results."""

    def respond(path, query):
        start = int(query.get("start", ["0"])[0])
        limit = int(query.get("max_results", ["100"])[0])
        page = items[start : start + limit]
        return 200, {"Content-Type": "application/atom+xml"}, _atom(page)

    return respond


def test_list_arxiv_filters_by_year():
    items = [
        ("http://arxiv.org/abs/1412.0001v1", "2014-12-01T00:00:00Z"),
        ("http://arxiv.org/abs/1501.00002v2", "2015-01-05T00:00:00Z"),
        ("http://arxiv.org/abs/2001.00003v1", "2020-01-02T00:00:00Z"),
    ]
    with http_mock.http_server(_listing_responder(items)) as (url, _):
        fetcher, _ft = _fetcher()
        specs = list_arxiv_category(
            "physics.acc-ph", 2015, fetcher, base_url=url + "/api/query"
        )
    assert [s.id for s in specs] == ["1501.00002", "2001.00003"]
    assert all(s.family == "arxiv" for s in specs)
    assert all(s.expected_format == "latex_archive" for s in specs)
    assert specs[0].locator == "http://arxiv.org/e-print/1501.00002"


def test_list_arxiv_empty_listing():
    with http_mock.http_server(_listing_responder([])) as (url, _):
        fetcher, _ft = _fetcher()
        assert (
            list_arxiv_category("physics.acc-ph", 2015, fetcher, base_url=url)
            == []
        )


def test_list_arxiv_paginates():
    items = [
        (f"http://arxiv.org/abs/20{i:02d}.0000{i}v1", f"20{i:02d}-06-01T00:00:00Z")
        for i in range(15, 20)
    ]
    with http_mock.http_server(_listing_responder(items)) as (url, server):
        fetcher, _ft = _fetcher()
        specs = list_arxiv_category(
            "physics.acc-ph", 2015, fetcher, base_url=url, page_size=2
        )
        starts = [r["query"]["start"][0] for r in server.requests]
    assert len(specs) == 5
    assert starts == ["0", "2", "4"]


def test_list_arxiv_dedups_versions():
    items = [
        ("http://arxiv.org/abs/1501.00004v1", "2015-02-01T00:00:00Z"),
        ("http://arxiv.org/abs/1501.00004v2", "2015-03-01T00:00:00Z"),
    ]
    with http_mock.http_server(_listing_responder(items)) as (url, _):
        fetcher, _ft = _fetcher()
        specs = list_arxiv_category("physics.acc-ph", 2015, fetcher, base_url=url)
    assert [s.id for s in specs] == ["1501.00004"]


def test_list_arxiv_rate_limited_after_budget():
    with http_mock.http_server(lambda p, q: (503, {}, b"")) as (url, server):
        fetcher, _ft = _fetcher()
        with pytest.raises(RateLimitedError):
            list_arxiv_category("physics.acc-ph", 2015, fetcher, base_url=url)
        assert len(server.requests) == 5


def test_list_arxiv_rejects_garbage_feed():
    with http_mock.http_server(lambda p, q: (200, {}, b"not xml <")) as (url, _):
        fetcher, _ft = _fetcher()
        with pytest.raises(ParseError):
            list_arxiv_category("physics.acc-ph", 2015, fetcher, base_url=url)


def test_list_arxiv_precondition_checks():
    fetcher, _ft = _fetcher()
    with pytest.raises(ValueError):
        list_arxiv_category("physics.acc-ph", 1990, fetcher)
    with pytest.raises(ValueError):
        list_arxiv_category("", 2015, fetcher)


def test_list_arxiv_year_filter_property():
    rng = random.Random(330217)
    with http_mock.http_server(_listing_responder([])) as (url, server):
        fetcher, _ft = _fetcher()
        for _ in range(20):
            items = []
            years = []
            for i in range(rng.randrange(0, 12)):
                year = rng.randrange(2010, 2023)
                years.append(year)
                items.append(
                    (
                        f"http://arxiv.org/abs/{year % 100:02d}01.{i:05d}v1",
                        f"{year}-01-01T00:00:00Z",
                    )
                )
            server.respond = _listing_responder(items)
            specs = list_arxiv_category(
                "physics.acc-ph", 2015, fetcher, base_url=url, page_size=4
            )
            assert len(specs) == sum(1 for y in years if y >= 2015)


# --- fetching documents -------------------------------------------------------


def _fixed_now():
    return 1700000000.0  # 2023-11-14T22:13:20Z


def test_fetch_document_downloads_and_records_hash(tmp_path):
    body = b"0123456789"
    with http_mock.http_server(lambda p, q: (200, {}, body)) as (url, server):
        manifest = SourceManifest(tmp_path / "store")
        spec = SourceSpec("j1", "jacow", url + "/j1.mmd", "mmd")
        manifest.register(spec)
        fetcher, _ft = _fetcher()
        outcome = fetch_document(spec, manifest, fetcher, now=_fixed_now)
    assert outcome == "fetched"
    stored = manifest.store_path(spec)
    assert stored.read_bytes() == body
    entry = manifest.entries["j1"]
    # oracle: digest computed directly on the fixture bytes
    assert entry.content_hash == hashlib.sha256(body).hexdigest()
    assert entry.fetch_state == "fetched"
    assert entry.fetched_at == "2023-11-14T22:13:20Z"
    on_disk = json.loads(manifest.path.read_text(encoding="utf-8"))
    assert on_disk["entries"][0]["fetch_state"] == "fetched"


def test_fetch_document_is_idempotent_with_zero_network(tmp_path):
    body = b"payload bytes"
    with http_mock.http_server(lambda p, q: (200, {}, body)) as (url, server):
        manifest = SourceManifest(tmp_path / "store")
        spec = SourceSpec("j1", "jacow", url + "/j1.mmd", "mmd")
        manifest.register(spec)
        fetcher, _ft = _fetcher()
        fetch_document(spec, manifest, fetcher, now=_fixed_now)
        before = manifest.path.read_bytes()
        requests_before = len(server.requests)
        assert fetch_document(spec, manifest, fetcher, now=_fixed_now) == "verified"
        assert len(server.requests) == requests_before
    assert manifest.path.read_bytes() == before


def test_fetch_document_detects_tampering(tmp_path):
    body = b"original content"
    with http_mock.http_server(lambda p, q: (200, {}, body)) as (url, _):
        manifest = SourceManifest(tmp_path / "store")
        spec = SourceSpec("j1", "jacow", url + "/j1.mmd", "mmd")
        manifest.register(spec)
        fetcher, _ft = _fetcher()
        fetch_document(spec, manifest, fetcher, now=_fixed_now)
        stored = manifest.store_path(spec)
        flipped = bytearray(stored.read_bytes())
        flipped[0] ^= 0x01
        stored.write_bytes(bytes(flipped))
        with pytest.raises(ChecksumMismatchError) as excinfo:
            fetch_document(spec, manifest, fetcher, now=_fixed_now)
    assert excinfo.value.source_id == "j1"
    assert excinfo.value.expected == hashlib.sha256(body).hexdigest()


def test_fetch_document_books_copy_local_file(tmp_path):
    book = tmp_path / "mechanics.mmd"
    book.write_text("# Part One\n\nContent.", encoding="utf-8")
    manifest = SourceManifest(tmp_path / "store")
    spec = SourceSpec("bk1", "books", str(book), "mmd")
    manifest.register(spec)
    assert fetch_document(spec, manifest, now=_fixed_now) == "fetched"
    assert manifest.store_path(spec).read_text(encoding="utf-8").startswith(
        "# Part One"
    )
    assert manifest.entries["bk1"].content_hash == sha256_bytes(
        book.read_bytes()
    )


def test_fetch_document_books_missing_path_fails(tmp_path):
    manifest = SourceManifest(tmp_path / "store")
    spec = SourceSpec("bk1", "books", str(tmp_path / "nope.mmd"), "mmd")
    manifest.register(spec)
    with pytest.raises(NetworkError):
        fetch_document(spec, manifest, now=_fixed_now)
    assert manifest.entries["bk1"].fetch_state == "failed"
    on_disk = json.loads(manifest.path.read_text(encoding="utf-8"))
    assert on_disk["entries"][0]["fetch_state"] == "failed"


def test_fetch_document_unregistered_spec(tmp_path):
    manifest = SourceManifest(tmp_path / "store")
    with pytest.raises(ParseError):
        fetch_document(_spec(9), manifest, now=_fixed_now)


def test_fetch_document_failure_then_retry(tmp_path):
    state = {"ok": False}

    def respond(path, query):
        if state["ok"]:
            return 200, {}, b"now it works"
        return 404, {}, b""

    with http_mock.http_server(respond) as (url, _):
        manifest = SourceManifest(tmp_path / "store")
        spec = SourceSpec("j1", "jacow", url + "/j1.mmd", "mmd")
        manifest.register(spec)
        fetcher, _ft = _fetcher()
        with pytest.raises(NetworkError):
            fetch_document(spec, manifest, fetcher, now=_fixed_now)
        assert manifest.entries["j1"].fetch_state == "failed"
        state["ok"] = True
        assert fetch_document(spec, manifest, fetcher, now=_fixed_now) == "fetched"
    assert manifest.entries["j1"].fetch_state == "fetched"


def test_fetch_all_mixed_sources_and_idempotent_rerun(tmp_path):
    book = tmp_path / "b.mmd"
    book.write_text("# B\n\nBook text.", encoding="utf-8")

    def respond(path, query):
        if path.endswith("dead.mmd"):
            return 404, {}, b""
        return 200, {}, f"body of {path}".encode()

    with http_mock.http_server(respond) as (url, server):
        manifest = SourceManifest(tmp_path / "store")
        manifest.register(SourceSpec("a", "jacow", url + "/a.mmd", "mmd"))
        manifest.register(SourceSpec("b", "jacow", url + "/b.mmd", "mmd"))
        manifest.register(SourceSpec("bk", "books", str(book), "mmd"))
        manifest.register(SourceSpec("dead", "jacow", url + "/dead.mmd", "mmd"))
        fetcher, _ft = _fetcher()
        counts = fetch_all(manifest, fetcher, now=_fixed_now)
        assert counts == {"fetched": 3, "verified": 0, "failed": 1}

        bytes_after_first = manifest.path.read_bytes()
        requests_after_first = len(server.requests)
        # the dead link stays dead; rerun re-tries only it
        counts2 = fetch_all(manifest, fetcher, now=_fixed_now)
        assert counts2 == {"fetched": 0, "verified": 3, "failed": 1}
        assert len(server.requests) == requests_after_first + 1

        # fix the server and finish; a third run is fully offline
        server.respond = lambda p, q: (200, {}, b"revived")
        fetch_all(manifest, fetcher, now=_fixed_now)
        requests_done = len(server.requests)
        counts3 = fetch_all(manifest, fetcher, now=_fixed_now)
        assert counts3 == {"fetched": 0, "verified": 4, "failed": 0}
        assert len(server.requests) == requests_done
        assert manifest.path.read_bytes() != bytes_after_first  # dead now fetched
        final_bytes = manifest.path.read_bytes()
        fetch_all(manifest, fetcher, now=_fixed_now)
        assert manifest.path.read_bytes() == final_bytes


def test_fetched_entries_hash_matches_stored_payload(tmp_path):
    # invariant: recomputing the digest of every stored payload matches
    with http_mock.http_server(
        lambda p, q: (200, {}, f"content {p}".encode())
    ) as (url, _):
        manifest = SourceManifest(tmp_path / "store")
        for i in range(3):
            manifest.register(
                SourceSpec(f"s{i}", "jacow", f"{url}/s{i}.mmd", "mmd")
            )
        fetcher, _ft = _fetcher()
        fetch_all(manifest, fetcher, now=_fixed_now)
    for entry in manifest.entries.values():
        stored = manifest.store_path(entry.spec)
        assert sha256_bytes(stored.read_bytes()) == entry.content_hash
