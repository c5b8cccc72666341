"""Acceptance gate for the trainer: one test per shipping requirement.

Same shape as the producer's gate: each test covers one requirement,
enforces its runtime budget, and prints a single PASS/FAIL line.
"""

import time
from contextlib import contextmanager

import torch

from conftest import write_tp, write_tqa
from trainer.data import load_training_data
from trainer.lora import attach_adapters, count_trainable
from trainer.manifest import load_manifest
from trainer.model import build_model
from trainer.train import run_finetune


@contextmanager
def criterion(capsys, name, budget_s):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - start
        with capsys.disabled():
            print(f"[ACCEPTANCE] {name}: FAIL ({elapsed:.2f}s, "
                  f"budget {budget_s:g}s)")
        raise
    elapsed = time.perf_counter() - start
    verdict = "PASS" if elapsed < budget_s else "FAIL"
    with capsys.disabled():
        print(f"[ACCEPTANCE] {name}: {verdict} ({elapsed:.2f}s, "
              f"budget {budget_s:g}s)")
    assert elapsed < budget_s, (
        f"{name} exceeded its runtime budget: {elapsed:.2f}s"
    )


def _hundred_examples(tmp_path, manifest):
    tp = tmp_path / "tp.jsonl"
    tqa = tmp_path / "tqa.jsonl"
    write_tp(tp, [
        f"The quadrupole at slot {i} focuses the beam in one plane and "
        f"defocuses it in the other; slot {i} alternates accordingly."
        for i in range(60)
    ])
    write_tqa(tqa, [
        (f"What is stored in slot {i}?",
         f"Slot {i} holds a focusing quadrupole.")
        for i in range(40)
    ])
    result = load_training_data(tp, tqa, manifest)
    assert len(result.examples) == 100
    return result.examples


def test_trainer_smoke(capsys, make_manifest, tmp_path):
    with criterion(capsys, "trainer-smoke", 300.0):
        # default manifest, only the base model name overridden; the
        # stand-in is 128-dim so rank 64 stays genuinely low-rank
        manifest = load_manifest(make_manifest())
        assert manifest.base_model == "tiny-test-stand-in"
        assert manifest.lora_rank == 64
        assert manifest.lora_alpha == 128
        assert manifest.learning_rate == 5e-5
        assert manifest.effective_batch == 32

        examples = _hundred_examples(tmp_path, manifest)
        model = build_model(d_model=128, n_layers=2, n_heads=4, seed=11)
        base_before = {
            name: tensor.detach().clone()
            for name, tensor in model.state_dict().items()
        }

        attach_adapters(model, manifest, seed=11)

        # closed form: sum over targeted matrices of rank * (rows + cols);
        # here 2 layers x 4 square 128x128 matrices
        assert count_trainable(model) == 2 * 4 * 64 * (128 + 128) == 131072

        run = run_finetune(
            manifest, examples, model, tmp_path / "adapters",
            max_steps=20, seed=11,
        )
        assert run.steps_completed == 20
        assert run.losses[-1] < run.losses[0], (
            f"loss did not drop: {run.losses[0]:.4f} -> {run.losses[-1]:.4f}"
        )

        # base weights bit-identical: wrapped linears moved to *.base.*
        after = model.state_dict()
        for name, before in base_before.items():
            if name in after:
                now = after[name]
            else:
                layer, _, leaf = name.rpartition(".")
                now = after[f"{layer}.base.{leaf}"]
            assert torch.equal(before, now), f"base weight drifted: {name}"


def test_target_freezing(capsys, make_manifest, tmp_path):
    with criterion(capsys, "target-freezing", 60.0):
        manifest = load_manifest(
            make_manifest(target_weights=["query"], lora_rank=4, lora_alpha=8)
        )
        tp = tmp_path / "tp.jsonl"
        tqa = tmp_path / "tqa.jsonl"
        write_tp(tp, ["dipole field ramp"] * 4)
        write_tqa(tqa, [("Which magnet bends the beam?", "The dipole.")] * 4)
        examples = load_training_data(tp, tqa, manifest).examples

        model = build_model(seed=3)
        attach_adapters(model, manifest, seed=3)
        run_finetune(manifest, examples, model, tmp_path / "out",
                     max_steps=1, seed=3)

        for name, param in model.named_parameters():
            if "lora_" in name:
                assert param.grad is not None, f"adapter got no grad: {name}"
            else:
                grad_norm = (
                    0.0 if param.grad is None
                    else param.grad.norm().item()
                )
                assert grad_norm == 0.0, (
                    f"gradient leaked into {name}: norm {grad_norm}"
                )
