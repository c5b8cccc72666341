"""The fine-tuning loop.

One optimizer step covers per_device_batch x grad_accum examples. The
number of steps is epochs x ceil(n / effective_batch) unless max_steps
is given, in which case exactly that many steps run, cycling through
the data. Loss is logged per optimizer step to run_log.jsonl; adapter
weights are saved only when the run finishes cleanly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn
from torch.nn import functional as F

from .data import IGNORE_INDEX, Example
from .errors import NonFiniteLoss
from .lora import adapter_state, save_adapters, trainable_parameters
from .manifest import TrainManifest
from .model import PAD_ID

log = logging.getLogger(__name__)


@dataclass
class TrainingRun:
    manifest: TrainManifest
    steps_completed: int
    losses: list[float]
    adapter_output_path: Path

    def __post_init__(self):
        if len(self.losses) != self.steps_completed:
            raise ValueError(
                f"{len(self.losses)} logged losses for "
                f"{self.steps_completed} steps"
            )


def _pad_batch(batch: list[Example]) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(e.ids) for e in batch)
    ids = torch.full((len(batch), width), PAD_ID, dtype=torch.long)
    labels = torch.full((len(batch), width), IGNORE_INDEX, dtype=torch.long)
    for row, example in enumerate(batch):
        n = len(example.ids)
        ids[row, :n] = torch.tensor(example.ids, dtype=torch.long)
        labels[row, :n] = torch.tensor(example.labels, dtype=torch.long)
    return ids, labels


def _loss_for(model: nn.Module, batch: list[Example]) -> torch.Tensor:
    ids, labels = _pad_batch(batch)
    logits = model(ids)
    # next-token objective: position t predicts token t+1
    shifted_logits = logits[:, :-1, :].reshape(-1, logits.shape[-1])
    shifted_labels = labels[:, 1:].reshape(-1)
    return F.cross_entropy(
        shifted_logits, shifted_labels, ignore_index=IGNORE_INDEX
    )


def _micro_batches(examples, step, manifest):
    """The grad_accum micro-batches for one optimizer step, cycling."""
    n = len(examples)
    start = step * manifest.effective_batch
    for micro in range(manifest.grad_accum):
        offset = start + micro * manifest.per_device_batch
        batch = [
            examples[(offset + k) % n]
            for k in range(manifest.per_device_batch)
        ]
        yield batch


def total_steps(manifest: TrainManifest, n_examples: int) -> int:
    """Steps implied by the manifest: epochs x ceil(n / effective batch)."""
    return manifest.epochs * math.ceil(
        n_examples / manifest.effective_batch
    )


def run_finetune(
    manifest: TrainManifest,
    examples: list[Example],
    model: nn.Module,
    out_dir,
    *,
    max_steps: int | None = None,
    seed: int = 0,
) -> TrainingRun:
    """Train the attached adapters and save them on clean completion."""
    if not examples:
        raise ValueError("no training examples; refusing to start")
    if not adapter_state(model):
        raise ValueError("model has no adapters; attach adapters first")
    params = trainable_parameters(model)
    torch.manual_seed(seed)
    steps = max_steps if max_steps is not None else total_steps(
        manifest, len(examples)
    )
    optimizer = torch.optim.AdamW(params, lr=manifest.learning_rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.info(
        "training: %d examples, %d steps, effective batch %d, lr %g",
        len(examples), steps, manifest.effective_batch,
        manifest.learning_rate,
    )

    losses: list[float] = []
    with open(out / "run_log.jsonl", "w", encoding="utf-8") as run_log:
        for step in range(steps):
            optimizer.zero_grad()
            step_loss = 0.0
            for micro, batch in enumerate(
                _micro_batches(examples, step, manifest)
            ):
                loss = _loss_for(model, batch)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteLoss(step + 1, micro + 1, value)
                (loss / manifest.grad_accum).backward()
                step_loss += value / manifest.grad_accum
            optimizer.step()
            losses.append(step_loss)
            run_log.write(
                json.dumps({"loss": step_loss, "step": step + 1},
                           sort_keys=True) + "\n"
            )
            run_log.flush()
            log.info("step %d/%d loss %.4f", step + 1, steps, step_loss)

    save_adapters(model, manifest, out)
    return TrainingRun(
        manifest=manifest,
        steps_completed=len(losses),
        losses=losses,
        adapter_output_path=out,
    )
