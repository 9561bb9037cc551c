"""Dual conditioning: attention-pooled global vector and per-timestep
sequential projection of the backbone's hidden states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ShapeError


@dataclass
class ConditioningBundle:
    """Conditions handed to the generator, plus pooling weights for inspection."""

    c_global: torch.Tensor | None  # (B, D_LLM)
    c_seq: torch.Tensor | None     # (B, T_in, D_model)
    alpha: torch.Tensor | None     # (B, T_in), rows on the simplex


class GlobalAttentionPool(nn.Module):
    """Softmax attention pooling with a single trainable query vector.

    alpha_i = softmax(q . h_i / sqrt(d)) over timesteps, c_global = sum alpha_i h_i,
    with d the hidden width.
    """

    def __init__(self, d_llm: int):
        super().__init__()
        self.d_llm = d_llm
        self.q_pool = nn.Parameter(torch.randn(d_llm) / math.sqrt(d_llm))

    def forward(self, h_out: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if h_out.dim() != 3 or h_out.shape[-1] != self.d_llm:
            raise ShapeError(f"expected (B, T, {self.d_llm}) hidden states, got {tuple(h_out.shape)}")
        logits = h_out @ self.q_pool.to(h_out.dtype) / math.sqrt(self.d_llm)
        alpha = torch.softmax(logits, dim=-1)
        c_global = torch.einsum("bt,btd->bd", alpha, h_out)
        return c_global, alpha


class SequentialProjector(nn.Module):
    """Row-wise projection + layer normalization: c_seq = LayerNorm(H @ W_seq)."""

    def __init__(self, d_llm: int, d_model: int, eps: float = 1e-5):
        super().__init__()
        self.w_seq = nn.Parameter(torch.randn(d_llm, d_model) / math.sqrt(d_llm))
        self.norm = nn.LayerNorm(d_model, eps=eps)

    def forward(self, h_out: torch.Tensor) -> torch.Tensor:
        if h_out.dim() != 3 or h_out.shape[-1] != self.w_seq.shape[0]:
            raise ShapeError(
                f"expected (B, T, {self.w_seq.shape[0]}) hidden states, got {tuple(h_out.shape)}"
            )
        return self.norm(h_out @ self.w_seq.to(h_out.dtype))
