"""Frozen transformer backbone with trainable multi-scale adapters.

The backbone is a stack of pre-norm causal transformer blocks whose weights
never train (a seeded random stand-in by default; an external checkpoint of
the same architecture is a drop-in). Each layer output follows

    h_l = h_{l-1} + block(h_{l-1}) + lambda_l * adapter(h_{l-1})

where ``block`` is the frozen residual delta and the adapter is a bottleneck
with parallel temporal convolutions (kernel sizes 3 and 5) and a gated
up-projection. Up-projections start at zero, so the adapted forward equals
the frozen forward at step 0.

Adapter convolutions use causal left padding, so the adapted hidden state at
position t depends only on embeddings <= t, matching the backbone's causal
attention.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError, ShapeError


class CausalSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ConfigurationError(f"hidden width {dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        b, t, d = h.shape
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        q = q.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        k = k.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        v = v.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        logits = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        mask = torch.tril(torch.ones(t, t, dtype=torch.bool, device=h.device))
        logits = logits.masked_fill(~mask, float("-inf"))
        out = torch.softmax(logits, dim=-1) @ v
        return self.proj(out.transpose(1, 2).reshape(b, t, d))


class TransformerBlockDelta(nn.Module):
    """Pre-norm block returning its residual delta, i.e. block(h) - h."""

    def __init__(self, dim: int, heads: int, ffn_mult: int = 4):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_mult * dim), nn.GELU(), nn.Linear(ffn_mult * dim, dim)
        )

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        a = self.attn(self.ln1(h))
        m = self.ffn(self.ln2(h + a))
        return a + m


class FrozenBackbone(nn.Module):
    """Stack of frozen pre-norm causal transformer blocks."""

    def __init__(self, d_llm: int, layers: int, heads: int):
        super().__init__()
        self.d_llm = d_llm
        self.blocks = nn.ModuleList(TransformerBlockDelta(d_llm, heads) for _ in range(layers))

    def freeze(self) -> "FrozenBackbone":
        for p in self.parameters():
            p.requires_grad_(False)
        return self

    @classmethod
    def toy_random(cls, d_llm: int = 128, layers: int = 2, heads: int = 4, seed: int = 0) -> "FrozenBackbone":
        """Deterministically initialized stand-in, frozen at construction."""
        state = torch.random.get_rng_state()
        try:
            torch.manual_seed(seed)
            model = cls(d_llm, layers, heads)
        finally:
            torch.random.set_rng_state(state)
        return model.freeze()

    @classmethod
    def from_checkpoint(cls, path: str | Path, d_llm: int, layers: int, heads: int) -> "FrozenBackbone":
        """Load externally trained weights for the same block architecture."""
        model = cls(d_llm, layers, heads)
        state = torch.load(Path(path), map_location="cpu", weights_only=True)
        model.load_state_dict(state)
        return model.freeze()

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            h = h + block(h)
        return h


class MultiScaleAdapter(nn.Module):
    """Bottleneck adapter: down-project, parallel temporal convolutions, gated
    zero-initialized up-projection.

    With ``msc_enabled=False`` the convolution branch is swapped for a single
    linear map on the down-projected features.
    """

    def __init__(
        self,
        d_llm: int,
        rank: int,
        kernel_sizes: Sequence[int] = (3, 5),
        msc_enabled: bool = True,
    ):
        super().__init__()
        self.rank = rank
        self.msc_enabled = msc_enabled
        self.down = nn.Linear(d_llm, rank)
        if msc_enabled:
            self.convs = nn.ModuleList(nn.Conv1d(rank, rank, k) for k in kernel_sizes)
            self.kernel_sizes = tuple(kernel_sizes)
        else:
            self.mid_linear = nn.Linear(rank, rank)
        self.gate_proj = nn.Linear(rank, d_llm)
        self.up = nn.Linear(rank, d_llm)
        nn.init.zeros_(self.up.weight)
        nn.init.zeros_(self.up.bias)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        if h.dim() != 3:
            raise ShapeError(f"expected (B, T, D) hidden states, got {tuple(h.shape)}")
        hd = self.down(h)
        if self.msc_enabled:
            seq = hd.transpose(1, 2)  # (B, rank, T) for temporal convolution
            acc = None
            for conv, k in zip(self.convs, self.kernel_sizes):
                out = conv(F.pad(seq, (k - 1, 0)))  # causal left padding
                acc = out if acc is None else acc + out
            mid = F.silu(acc).transpose(1, 2)
        else:
            mid = F.silu(self.mid_linear(hd))
        gate = torch.sigmoid(self.gate_proj(mid))
        return gate * self.up(mid)


class AdapterStack(nn.Module):
    """One adapter and one scale per backbone layer."""

    def __init__(
        self,
        d_llm: int,
        layers: int,
        rank: int,
        kernel_sizes: Sequence[int] = (3, 5),
        lambda_init: float = 0.1,
        msc_enabled: bool = True,
    ):
        super().__init__()
        self.adapters = nn.ModuleList(
            MultiScaleAdapter(d_llm, rank, kernel_sizes, msc_enabled) for _ in range(layers)
        )
        self.lambdas = nn.ParameterList(
            nn.Parameter(torch.tensor(float(lambda_init))) for _ in range(layers)
        )

    def __len__(self) -> int:
        return len(self.adapters)


class ModalityProjector(nn.Module):
    """Linear projection of visual tokens into the backbone width plus a
    learnable positional term: TE = Z @ W_proj + P_pos."""

    def __init__(self, d_model: int, d_llm: int, t_in: int):
        super().__init__()
        self.w_proj = nn.Parameter(torch.randn(d_model, d_llm) / math.sqrt(d_model))
        self.p_pos = nn.Parameter(torch.randn(t_in, d_llm) * 0.02)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.dim() != 3 or tokens.shape[-1] != self.w_proj.shape[0]:
            raise ShapeError(
                f"expected (B, {self.p_pos.shape[0]}, {self.w_proj.shape[0]}) tokens, got {tuple(tokens.shape)}"
            )
        if tokens.shape[1] != self.p_pos.shape[0]:
            raise ShapeError(f"expected {self.p_pos.shape[0]} tokens, got {tokens.shape[1]}")
        return tokens @ self.w_proj + self.p_pos


class AdaptedBackbone(nn.Module):
    """Frozen blocks combined with trainable adapters layer by layer."""

    def __init__(self, backbone: FrozenBackbone, adapters: AdapterStack | None):
        super().__init__()
        if adapters is not None and len(adapters) != len(backbone.blocks):
            raise ConfigurationError(
                f"{len(adapters)} adapters for {len(backbone.blocks)} backbone layers"
            )
        self.backbone = backbone
        self.adapters = adapters
        self.adapter_enabled = adapters is not None

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        if embedding.shape[-1] != self.backbone.d_llm:
            raise ShapeError(
                f"embedding width {embedding.shape[-1]} != backbone width {self.backbone.d_llm}"
            )
        h = embedding
        for i, block in enumerate(self.backbone.blocks):
            delta = block(h)
            if self.adapter_enabled and self.adapters is not None:
                h = h + delta + self.adapters.lambdas[i] * self.adapters.adapters[i](h)
            else:
                h = h + delta
        return h
