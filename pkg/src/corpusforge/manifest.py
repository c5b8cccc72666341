"""Fine-tune configuration manifest.

The manifest file is the only contract between this pipeline and any
trainer: a schema-versioned JSON object with sorted keys, so the golden
copy stays byte-stable. The learning rate is stored as a compact
scientific-notation string ("5e-5", not 5e-05) because that is the
form the file format freezes; it parses back to the exact same float.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ManifestError

SCHEMA_VERSION = 1

VALID_TARGETS = ("query", "key", "value", "projection")

DEFAULT_BASE_MODEL = "vicuna-7b-16k-v1.5"


def format_learning_rate(lr: float) -> str:
    """Shortest exact decimal form with a squeezed exponent."""
    s = repr(float(lr))
    if "e" not in s:
        return s
    mantissa, _, exp = s.partition("e")
    sign = "-" if exp.startswith("-") else ""
    digits = exp.lstrip("+-").lstrip("0") or "0"
    return f"{mantissa}e{sign}{digits}"


@dataclass(frozen=True)
class TrainConfig:
    base_model: str = DEFAULT_BASE_MODEL
    context_tokens: int = 16384
    lora_rank: int = 64
    lora_alpha: int = 128
    target_weights: tuple[str, ...] = VALID_TARGETS
    per_device_batch: int = 2
    grad_accum: int = 16
    epochs: int = 4
    learning_rate: float = 5e-5
    dataset_paths: tuple[str, ...] = ("tp.jsonl", "tqa.jsonl")

    def __post_init__(self) -> None:
        if not self.base_model:
            raise ManifestError("base_model must be non-empty")
        if self.context_tokens <= 0:
            raise ManifestError("context_tokens must be positive")
        if self.lora_rank <= 0:
            raise ManifestError("lora_rank must be positive")
        if self.lora_alpha <= 0:
            raise ManifestError("lora_alpha must be positive")
        if self.per_device_batch < 1:
            raise ManifestError("per_device_batch must be at least 1")
        if self.grad_accum < 1:
            raise ManifestError("grad_accum must be at least 1")
        if self.epochs < 1:
            raise ManifestError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise ManifestError("learning_rate must be positive")
        targets = tuple(self.target_weights)
        object.__setattr__(self, "target_weights", targets)
        if not targets:
            raise ManifestError("target_weights must be non-empty")
        if len(set(targets)) != len(targets):
            raise ManifestError("target_weights must be duplicate-free")
        for t in targets:
            if t not in VALID_TARGETS:
                raise ManifestError(
                    f"unknown target weight {t!r}; expected one of {VALID_TARGETS}"
                )
        object.__setattr__(self, "dataset_paths", tuple(self.dataset_paths))

    @property
    def effective_batch(self) -> int:
        return self.per_device_batch * self.grad_accum


def default_paper_config() -> TrainConfig:
    """The published fine-tune configuration, verbatim."""
    return TrainConfig()


def manifest_json(config: TrainConfig) -> str:
    data = {
        "schema_version": SCHEMA_VERSION,
        "base_model": config.base_model,
        "context_tokens": config.context_tokens,
        "lora_rank": config.lora_rank,
        "lora_alpha": config.lora_alpha,
        "target_weights": list(config.target_weights),
        "per_device_batch": config.per_device_batch,
        "grad_accum": config.grad_accum,
        "epochs": config.epochs,
        "learning_rate": format_learning_rate(config.learning_rate),
        "dataset_paths": list(config.dataset_paths),
    }
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_manifest(config: TrainConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(manifest_json(config))


_REQUIRED_FIELDS = (
    "base_model",
    "context_tokens",
    "lora_rank",
    "lora_alpha",
    "target_weights",
    "per_device_batch",
    "grad_accum",
    "epochs",
    "learning_rate",
    "dataset_paths",
)


def read_manifest(path) -> TrainConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except ValueError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ManifestError(
            f"unsupported manifest schema_version {version!r}; "
            f"this reader handles {SCHEMA_VERSION}"
        )
    missing = [f for f in _REQUIRED_FIELDS if f not in data]
    if missing:
        raise ManifestError(f"manifest missing fields: {', '.join(missing)}")
    try:
        lr = float(data["learning_rate"])
    except (TypeError, ValueError) as exc:
        raise ManifestError(
            f"learning_rate {data['learning_rate']!r} is not a number"
        ) from exc
    return TrainConfig(
        base_model=data["base_model"],
        context_tokens=data["context_tokens"],
        lora_rank=data["lora_rank"],
        lora_alpha=data["lora_alpha"],
        target_weights=tuple(data["target_weights"]),
        per_device_batch=data["per_device_batch"],
        grad_accum=data["grad_accum"],
        epochs=data["epochs"],
        learning_rate=lr,
        dataset_paths=tuple(data["dataset_paths"]),
    )
