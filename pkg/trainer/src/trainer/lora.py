"""Low-rank adapters over frozen linear layers.

For a base weight W (out x in), the adapter adds B @ A scaled by
alpha/rank, with A (rank x in) small-random and B (out x rank) zeros,
so the adapted model starts exactly equal to the base model. Trainable
parameters per adapted matrix: rank * (in + out).
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import torch
from torch import nn

from .errors import TargetNotFound
from .manifest import TrainManifest

log = logging.getLogger(__name__)


class LoRALinear(nn.Module):
    def __init__(
        self,
        base: nn.Linear,
        rank: int,
        alpha: int,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        self.base = base
        self.rank = rank
        self.scale = alpha / rank
        self.lora_a = nn.Parameter(
            torch.randn(rank, base.in_features, generator=generator) * 0.02
        )
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        delta = (x @ self.lora_a.t()) @ self.lora_b.t()
        return self.base(x) + delta * self.scale


def attach_adapters(
    model: nn.Module, manifest: TrainManifest, *, seed: int = 0
) -> nn.Module:
    """Freeze the base model and wrap the manifest's target matrices.

    Adapter initialization draws from its own generator seeded here, so
    two attachments with the same seed are bit-identical regardless of
    global RNG state. Raises TargetNotFound when the model has no
    weight matrix for one of the named targets.
    """
    for param in model.parameters():
        param.requires_grad = False

    generator = torch.Generator().manual_seed(seed)
    attached = {target: 0 for target in manifest.target_weights}
    for module in model.modules():
        for target in manifest.target_weights:
            child = getattr(module, target, None)
            if isinstance(child, nn.Linear):
                if manifest.lora_rank >= min(
                    child.in_features, child.out_features
                ):
                    log.warning(
                        "rank %d is not low-rank for a %dx%d matrix; the "
                        "adapter has at least as many parameters as the "
                        "base weight",
                        manifest.lora_rank,
                        child.out_features,
                        child.in_features,
                    )
                setattr(
                    module,
                    target,
                    LoRALinear(child, manifest.lora_rank,
                               manifest.lora_alpha, generator=generator),
                )
                attached[target] += 1
    missing = [t for t, n in attached.items() if n == 0]
    if missing:
        raise TargetNotFound(
            f"model has no weight matrix named {missing}; "
            f"available targets must be linear submodules"
        )
    return model


def trainable_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def count_trainable(model: nn.Module) -> int:
    return sum(p.numel() for p in trainable_parameters(model))


def expected_adapter_parameters(
    model: nn.Module, manifest: TrainManifest
) -> int:
    """Closed-form count: sum of rank * (rows + cols) over targets.

    Computed from the frozen base matrices, independently of how the
    adapters store their tensors.
    """
    total = 0
    for module in model.modules():
        for target in manifest.target_weights:
            child = getattr(module, target, None)
            if isinstance(child, (nn.Linear, LoRALinear)):
                base = child.base if isinstance(child, LoRALinear) else child
                rows, cols = base.out_features, base.in_features
                total += manifest.lora_rank * (rows + cols)
    return total


def adapter_state(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: tensor
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }


def save_adapters(model: nn.Module, manifest: TrainManifest, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state(model), out / "adapter_weights.pt")
    config = {
        "lora_alpha": manifest.lora_alpha,
        "lora_rank": manifest.lora_rank,
        "target_weights": list(manifest.target_weights),
    }
    (out / "adapter_config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
