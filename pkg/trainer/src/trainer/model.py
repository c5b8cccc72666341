"""A tiny decoder-only causal language model over raw bytes.

This is a desk-scale stand-in for a large chat model: same structural
contract (attention blocks exposing query/key/value/projection weight
matrices), a few hundred thousand parameters instead of billions. The
manifest's base_model string is advisory; the model here is randomly
initialized and sized by constructor arguments.
"""

from __future__ import annotations

import math

import torch
from torch import nn

PAD_ID = 256
BOS_ID = 257
EOS_ID = 258
VOCAB_SIZE = 259  # 256 byte values + pad + bos + eos


def encode(text: str) -> list[int]:
    """Byte-level tokenization with begin/end markers."""
    return [BOS_ID, *text.encode("utf-8"), EOS_ID]


def encode_prefix_len(text: str) -> int:
    """Number of leading token positions the given prefix occupies."""
    return 1 + len(text.encode("utf-8"))  # BOS plus the prefix bytes


class Attention(nn.Module):
    """Multi-head self-attention with individually named projections.

    The submodule names (query, key, value, projection) are the adapter
    attachment points; `projection` is the output projection.
    """

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads:
            raise ValueError("d_model must divide evenly into heads")
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.query = nn.Linear(d_model, d_model, bias=False)
        self.key = nn.Linear(d_model, d_model, bias=False)
        self.value = nn.Linear(d_model, d_model, bias=False)
        self.projection = nn.Linear(d_model, d_model, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        shape = (b, t, self.n_heads, self.head_dim)
        q = self.query(x).view(shape).transpose(1, 2)
        k = self.key(x).view(shape).transpose(1, 2)
        v = self.value(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        causal = torch.triu(
            torch.full((t, t), float("-inf"), device=x.device), diagonal=1
        )
        attn = torch.softmax(scores + causal, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.projection(out)


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int, d_ff: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = Attention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, d_ff),
            nn.GELU(),
            nn.Linear(d_ff, d_model),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class TinyCausalLM(nn.Module):
    def __init__(
        self,
        d_model: int = 64,
        n_layers: int = 2,
        n_heads: int = 4,
        d_ff: int = 128,
        max_seq: int = 1024,
    ):
        super().__init__()
        self.max_seq = max_seq
        self.embed = nn.Embedding(VOCAB_SIZE, d_model)
        self.pos = nn.Embedding(max_seq, d_model)
        self.blocks = nn.ModuleList(
            Block(d_model, n_heads, d_ff) for _ in range(n_layers)
        )
        self.norm = nn.LayerNorm(d_model)
        self.head = nn.Linear(d_model, VOCAB_SIZE, bias=False)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        t = ids.shape[1]
        if t > self.max_seq:
            raise ValueError(f"sequence length {t} exceeds {self.max_seq}")
        positions = torch.arange(t, device=ids.device)
        x = self.embed(ids) + self.pos(positions)
        for block in self.blocks:
            x = block(x)
        return self.head(self.norm(x))


def build_model(
    d_model: int = 64,
    n_layers: int = 2,
    n_heads: int = 4,
    seed: int = 0,
) -> TinyCausalLM:
    """Construct a reproducibly initialized tiny model."""
    generator_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = TinyCausalLM(d_model=d_model, n_layers=n_layers,
                             n_heads=n_heads, d_ff=2 * d_model)
    finally:
        torch.random.set_rng_state(generator_state)
    return model
