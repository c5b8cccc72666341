"""Command-line entry point.

    trainer --manifest train_manifest.json --tp tp.jsonl --tqa tqa.jsonl \
        --out adapters/

Reads only the files named on the command line; writes adapter weights
and run_log.jsonl into --out. Exit codes: 0 success, 1 training
aborted, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .data import load_training_data
from .errors import NonFiniteLoss, TrainerError
from .lora import attach_adapters, count_trainable
from .manifest import load_manifest
from .model import build_model
from .train import run_finetune

log = logging.getLogger("trainer")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trainer",
        description="Fine-tune low-rank adapters on a tiny causal "
                    "language model from a training manifest.",
    )
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--tp", required=True,
                        help="plain-text dataset (JSONL)")
    parser.add_argument("--tqa", required=True,
                        help="question/answer dataset (JSONL)")
    parser.add_argument("--out", required=True,
                        help="output directory for adapters and run log")
    parser.add_argument("--max-steps", type=int, default=None,
                        help="run exactly this many optimizer steps, "
                             "cycling the data")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mixing", choices=("interleave", "sequential"),
                        default="interleave")
    parser.add_argument("--d-model", type=int, default=64)
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--heads", type=int, default=4)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    if args.max_steps is not None and args.max_steps < 1:
        log.error("--max-steps must be at least 1")
        return 2
    try:
        manifest = load_manifest(args.manifest)
        log.info(
            "manifest base_model %r is advisory; training a randomly "
            "initialized %d-dim, %d-layer stand-in",
            manifest.base_model, args.d_model, args.layers,
        )
        data = load_training_data(
            args.tp, args.tqa, manifest, mixing=args.mixing
        )
        if not data.examples:
            log.error("both datasets are empty; nothing to train on")
            return 2
        model = build_model(
            d_model=args.d_model, n_layers=args.layers,
            n_heads=args.heads, seed=args.seed,
        )
        attach_adapters(model, manifest, seed=args.seed)
        log.info("trainable adapter parameters: %d", count_trainable(model))
        run = run_finetune(
            manifest, data.examples, model, args.out,
            max_steps=args.max_steps, seed=args.seed,
        )
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2
    except NonFiniteLoss as exc:
        log.error("%s", exc)
        return 1
    except TrainerError as exc:
        log.error("%s", exc)
        return 2
    print(
        f"{run.steps_completed} steps, final loss {run.losses[-1]:.4f}, "
        f"adapters in {run.adapter_output_path}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
