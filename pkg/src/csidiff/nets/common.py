"""Shared building blocks: timestep embeddings, norms, attention."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Raw sinusoidal encoding of integer steps, sine half then cosine half.

    t may be a scalar or [B]; output is [B, dim].  At t = 0 the sine
    half is all zeros and the cosine half all ones.
    """
    if dim % 2 != 0:
        raise ConfigError(f"sinusoidal embedding dim must be even, got {dim}")
    if t.dim() == 0:
        t = t[None]
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64, device=t.device) / half
    )
    angles = t[:, None].to(torch.float64) * freqs[None, :]
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    return emb.to(torch.get_default_dtype())


class TimestepEmbed(nn.Module):
    """Sinusoid followed by a two-layer SiLU MLP to the conditioning width."""

    def __init__(self, sinusoid_dim: int, out_dim: int):
        super().__init__()
        if sinusoid_dim % 2 != 0:
            raise ConfigError(f"sinusoid_dim must be even, got {sinusoid_dim}")
        self.sinusoid_dim = sinusoid_dim
        self.mlp = nn.Sequential(
            nn.Linear(sinusoid_dim, out_dim),
            nn.SiLU(),
            nn.Linear(out_dim, out_dim),
        )

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        emb = sinusoidal_embedding(t, self.sinusoid_dim)
        return self.mlp(emb.to(next(self.parameters()).dtype))


def group_norm(channels: int, groups: int = 8) -> nn.GroupNorm:
    """GroupNorm with at most ``groups`` groups, falling back to the channel count."""
    return nn.GroupNorm(min(groups, channels), channels)


class SpatialSelfAttention(nn.Module):
    """Pre-norm self-attention over the flattened spatial grid of a 2D map."""

    def __init__(self, channels: int, num_heads: int = 1):
        super().__init__()
        if channels % num_heads != 0:
            raise ConfigError(f"channels {channels} not divisible by heads {num_heads}")
        self.num_heads = num_heads
        self.norm = group_norm(channels)
        self.qkv = nn.Conv2d(channels, 3 * channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b, 3, self.num_heads, c // self.num_heads, h * w)
        q, k, v = qkv.unbind(dim=1)
        attn = torch.softmax(q.transpose(-2, -1) @ k / math.sqrt(c // self.num_heads), dim=-1)
        out = (v @ attn.transpose(-2, -1)).reshape(b, c, h, w)
        return x + self.proj(out)


class TemporalSelfAttention(nn.Module):
    """Attention along the frame axis of a 3D map, each spatial site independent."""

    def __init__(self, channels: int, num_heads: int = 4):
        super().__init__()
        if channels % num_heads != 0:
            raise ConfigError(f"channels {channels} not divisible by heads {num_heads}")
        self.num_heads = num_heads
        self.norm = group_norm(channels)
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, f, h, w = x.shape
        tokens = self.norm(x).permute(0, 3, 4, 2, 1).reshape(b * h * w, f, c)
        qkv = self.qkv(tokens).reshape(b * h * w, f, 3, self.num_heads, c // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(dim=0)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(c // self.num_heads), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b * h * w, f, c)
        out = self.proj(out).reshape(b, h, w, f, c).permute(0, 4, 3, 1, 2)
        return x + out
