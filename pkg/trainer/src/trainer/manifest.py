"""Reader for the training manifest file.

The manifest is the only configuration input; this module validates it
independently so the trainer stays decoupled from whatever produced it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ManifestError

SCHEMA_VERSION = 1
VALID_TARGETS = ("query", "key", "value", "projection")

_REQUIRED = (
    "base_model",
    "context_tokens",
    "dataset_paths",
    "epochs",
    "grad_accum",
    "learning_rate",
    "lora_alpha",
    "lora_rank",
    "per_device_batch",
    "target_weights",
)


@dataclass(frozen=True)
class TrainManifest:
    base_model: str
    context_tokens: int
    dataset_paths: tuple[str, ...]
    epochs: int
    grad_accum: int
    learning_rate: float
    lora_alpha: int
    lora_rank: int
    per_device_batch: int
    target_weights: tuple[str, ...]

    @property
    def effective_batch(self) -> int:
        return self.per_device_batch * self.grad_accum


def load_manifest(path) -> TrainManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except ValueError as exc:
        raise ManifestError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ManifestError(
            f"{path}: unsupported schema_version "
            f"{payload.get('schema_version')!r}"
        )
    missing = [k for k in _REQUIRED if k not in payload]
    if missing:
        raise ManifestError(f"{path}: missing fields {missing}")

    try:
        lr = float(payload["learning_rate"])
    except (TypeError, ValueError) as exc:
        raise ManifestError(
            f"{path}: learning_rate is not a number: "
            f"{payload['learning_rate']!r}"
        ) from exc

    manifest = TrainManifest(
        base_model=str(payload["base_model"]),
        context_tokens=int(payload["context_tokens"]),
        dataset_paths=tuple(payload["dataset_paths"]),
        epochs=int(payload["epochs"]),
        grad_accum=int(payload["grad_accum"]),
        learning_rate=lr,
        lora_alpha=int(payload["lora_alpha"]),
        lora_rank=int(payload["lora_rank"]),
        per_device_batch=int(payload["per_device_batch"]),
        target_weights=tuple(payload["target_weights"]),
    )
    for field_name in ("context_tokens", "epochs", "grad_accum",
                       "lora_alpha", "lora_rank", "per_device_batch"):
        if getattr(manifest, field_name) < 1:
            raise ManifestError(
                f"{path}: {field_name} must be positive"
            )
    if manifest.learning_rate <= 0:
        raise ManifestError(f"{path}: learning_rate must be positive")
    if not manifest.target_weights:
        raise ManifestError(f"{path}: target_weights must be non-empty")
    for target in manifest.target_weights:
        if target not in VALID_TARGETS:
            raise ManifestError(
                f"{path}: unknown target weight {target!r}; "
                f"valid: {VALID_TARGETS}"
            )
    return manifest
