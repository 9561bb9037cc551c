"""Resolution-preserving frame encoder and causal temporal aggregation.

Every stage keeps the N x N spatial grid intact (stride 1, no pooling), so
small congestion structures survive. Per-frame feature maps are pooled to
vectors, projected to keys/values, and attended over by learnable temporal
queries under a lower-triangular mask.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError, ShapeError


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    """Classic sine/cosine positional table of shape (length, dim)."""
    position = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    half = (dim + 1) // 2
    freq = torch.exp(torch.arange(half, dtype=torch.float32) * (-math.log(10000.0) / max(half - 1, 1)))
    angles = position * freq.unsqueeze(0)
    table = torch.zeros(length, dim)
    table[:, 0::2] = torch.sin(angles[:, : (dim + 1) // 2])
    table[:, 1::2] = torch.cos(angles[:, : dim // 2])
    return table


class ResidualBlock2d(nn.Module):
    """Two 3x3 convolutions with a skip connection; stride 1, no pooling."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.silu(self.conv1(x)))


class SpatialAttentionGate(nn.Module):
    """Per-location sigmoid gate from channel-pooled mean/max statistics."""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)
        self.force_identity = False  # test hook: skip gating entirely

    def gates(self, x: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.force_identity:
            return x
        return x * self.gates(x)


class FrameEncoder(nn.Module):
    """Stem + residual blocks + spatial attention; output spatial size == input."""

    def __init__(self, in_channels: int = 3, feature_channels: int = 32, res_blocks: int = 2):
        super().__init__()
        self.feature_channels = feature_channels
        self.stem = nn.Conv2d(in_channels, feature_channels, 3, stride=1, padding=1)
        self.blocks = nn.ModuleList(ResidualBlock2d(feature_channels) for _ in range(res_blocks))
        self.attention = SpatialAttentionGate()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] < 3 or x.shape[-2] < 3:
            raise ConfigurationError(
                f"spatial grid {tuple(x.shape[-2:])} is below the 3x3 minimum"
            )
        h = self.stem(x)
        spatial = h.shape[-2:]
        for block in self.blocks:
            h = block(h)
            assert h.shape[-2:] == spatial  # resolution preserved at every stage
        h = self.attention(h)
        assert h.shape[-2:] == spatial
        return h


class CausalTemporalAggregator(nn.Module):
    """Learnable queries attend over pooled frame features under a causal mask.

    Frames are reduced to vectors by global average pooling, projected into
    key/value spaces, and combined by masked single-head attention (multiple
    heads available via ``heads``). The mask realizes causality by setting
    logits above the diagonal to -inf, so token t is an exact function of
    frames <= t.
    """

    def __init__(self, t_in: int, feature_channels: int, d_model: int, heads: int = 1):
        super().__init__()
        if d_model % heads != 0:
            raise ConfigurationError(f"d_model={d_model} not divisible by heads={heads}")
        self.t_in = t_in
        self.d_model = d_model
        self.heads = heads
        self.w_k = nn.Linear(feature_channels, d_model, bias=False)
        self.w_v = nn.Linear(feature_channels, d_model, bias=False)
        self.q_temp = nn.Parameter(sinusoidal_positions(t_in, d_model))
        mask = torch.tril(torch.ones(t_in, t_in, dtype=torch.bool))
        self.register_buffer("causal_mask", mask)
        self.force_uniform = False  # test hook: equal logits on the unmasked prefix

    def pool_frames(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, T, C, H, W) -> (B, T, C) by global average pooling."""
        return frames.mean(dim=(-2, -1))

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.dim() != 5:
            raise ShapeError(f"expected (B, T, C, H, W) frames, got {tuple(frames.shape)}")
        if frames.shape[1] != self.t_in:
            raise ShapeError(f"expected {self.t_in} frames, got {frames.shape[1]}")
        pooled = self.pool_frames(frames)
        b = pooled.shape[0]
        k = self.w_k(pooled)
        v = self.w_v(pooled)
        q = self.q_temp.to(pooled.dtype).unsqueeze(0).expand(b, -1, -1)

        head_dim = self.d_model // self.heads
        q = q.view(b, self.t_in, self.heads, head_dim).transpose(1, 2)
        k = k.view(b, self.t_in, self.heads, head_dim).transpose(1, 2)
        v = v.view(b, self.t_in, self.heads, head_dim).transpose(1, 2)

        logits = q @ k.transpose(-2, -1) / math.sqrt(head_dim)
        if self.force_uniform:
            logits = torch.zeros_like(logits)
        logits = logits.masked_fill(~self.causal_mask, float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        tokens = weights @ v
        return tokens.transpose(1, 2).reshape(b, self.t_in, self.d_model)
