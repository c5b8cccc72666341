"""Low-rank-adapter fine-tuning from a training manifest and JSONL data."""

__version__ = "0.1.0"
