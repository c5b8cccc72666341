"""Manifest loading and validation."""

import json

import pytest

from trainer.errors import ManifestError
from trainer.manifest import load_manifest


def test_loads_producer_format(make_manifest):
    manifest = load_manifest(make_manifest())
    assert manifest.base_model == "tiny-test-stand-in"
    assert manifest.context_tokens == 16384
    assert manifest.learning_rate == 5e-5
    assert manifest.lora_rank == 64
    assert manifest.lora_alpha == 128
    assert manifest.target_weights == ("query", "key", "value", "projection")
    assert manifest.dataset_paths == ("tp.jsonl", "tqa.jsonl")
    assert manifest.effective_batch == 32


def test_numeric_learning_rate_accepted(make_manifest):
    manifest = load_manifest(make_manifest(learning_rate=0.0001))
    assert manifest.learning_rate == 1e-4


def test_missing_file(tmp_path):
    with pytest.raises(ManifestError, match="cannot read"):
        load_manifest(tmp_path / "absent.json")


def test_invalid_json(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text("{oops")
    with pytest.raises(ManifestError, match="not valid JSON"):
        load_manifest(bad)


def test_non_object(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text("[]")
    with pytest.raises(ManifestError, match="JSON object"):
        load_manifest(bad)


def test_wrong_schema_version(make_manifest):
    with pytest.raises(ManifestError, match="schema_version"):
        load_manifest(make_manifest(schema_version=2))


def test_missing_field(tmp_path, make_manifest):
    path = make_manifest()
    payload = json.loads(path.read_text())
    del payload["epochs"]
    path.write_text(json.dumps(payload))
    with pytest.raises(ManifestError, match="epochs"):
        load_manifest(path)


@pytest.mark.parametrize("overrides", [
    {"epochs": 0},
    {"lora_rank": -1},
    {"grad_accum": 0},
    {"per_device_batch": 0},
    {"context_tokens": 0},
    {"learning_rate": "0"},
    {"target_weights": []},
    {"target_weights": ["query", "attention"]},
    {"learning_rate": "fast"},
])
def test_invalid_values_rejected(make_manifest, overrides):
    with pytest.raises(ManifestError):
        load_manifest(make_manifest(**overrides))
