import json
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
FIXTURES_DIR = TESTS_DIR / "fixtures"

# Mirrors what the dataset pipeline writes, string learning rate and all.
DEFAULT_MANIFEST = {
    "base_model": "tiny-test-stand-in",
    "context_tokens": 16384,
    "dataset_paths": ["tp.jsonl", "tqa.jsonl"],
    "epochs": 4,
    "grad_accum": 16,
    "learning_rate": "5e-5",
    "lora_alpha": 128,
    "lora_rank": 64,
    "per_device_batch": 2,
    "schema_version": 1,
    "target_weights": ["query", "key", "value", "projection"],
}


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture
def make_manifest(tmp_path):
    def _make(**overrides):
        payload = dict(DEFAULT_MANIFEST)
        payload.update(overrides)
        path = tmp_path / "train_manifest.json"
        path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return path

    return _make


def write_tp(path, texts):
    with open(path, "w", encoding="utf-8") as fh:
        for i, text in enumerate(texts):
            fh.write(json.dumps({
                "corpus": "jacow",
                "source_id": f"s{i:03d}",
                "text": text,
            }, sort_keys=True) + "\n")
    return path


def write_tqa(path, pairs):
    with open(path, "w", encoding="utf-8") as fh:
        for i, (question, answer) in enumerate(pairs):
            fh.write(json.dumps({
                "answer": answer,
                "chunk_id": f"s{i:03d}#0000",
                "corpus": "books",
                "question": question,
                "source_id": f"s{i:03d}",
            }, sort_keys=True) + "\n")
    return path
