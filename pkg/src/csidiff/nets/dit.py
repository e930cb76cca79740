"""Transformer denoiser on non-overlapping patches with adaLN-Zero conditioning."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ConfigError, InputError
from .common import TimestepEmbed


def patch_tokens(x: torch.Tensor, patch_size: int) -> torch.Tensor:
    """Rearrange [B, C, H, W] into per-patch pixel tokens [B, T, C*P*P]."""
    b, c, h, w = x.shape
    p = patch_size
    if h % p or w % p:
        raise ConfigError(f"patch size {p} does not divide spatial dims {(h, w)}")
    x = x.reshape(b, c, h // p, p, w // p, p)
    return x.permute(0, 2, 4, 1, 3, 5).reshape(b, (h // p) * (w // p), c * p * p)


def unpatch_tokens(tokens: torch.Tensor, patch_size: int, hw: tuple[int, int]) -> torch.Tensor:
    """Inverse of :func:`patch_tokens`: [B, T, C*P*P] back to [B, C, H, W]."""
    b, n, d = tokens.shape
    p = patch_size
    h, w = hw
    gh, gw = h // p, w // p
    if n != gh * gw or d % (p * p):
        raise InputError(f"token grid {n}x{d} does not match {hw} at patch size {p}")
    c = d // (p * p)
    x = tokens.reshape(b, gh, gw, c, p, p)
    return x.permute(0, 3, 1, 4, 2, 5).reshape(b, c, h, w)


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale[:, None, :]) + shift[:, None, :]


class DiTBlock(nn.Module):
    """Pre-norm attention/MLP block gated and modulated by the timestep embedding."""

    def __init__(self, hidden_dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        if hidden_dim % num_heads != 0:
            raise ConfigError(f"hidden_dim {hidden_dim} not divisible by heads {num_heads}")
        self.num_heads = num_heads
        self.norm1 = nn.LayerNorm(hidden_dim, elementwise_affine=False)
        self.qkv = nn.Linear(hidden_dim, 3 * hidden_dim)
        self.attn_proj = nn.Linear(hidden_dim, hidden_dim)
        self.norm2 = nn.LayerNorm(hidden_dim, elementwise_affine=False)
        mlp_dim = int(hidden_dim * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(hidden_dim, mlp_dim), nn.GELU(), nn.Linear(mlp_dim, hidden_dim)
        )
        # six vectors: shift/scale/gate for attention, then for the MLP
        self.modulation = nn.Sequential(nn.SiLU(), nn.Linear(hidden_dim, 6 * hidden_dim))
        nn.init.zeros_(self.modulation[1].weight)
        nn.init.zeros_(self.modulation[1].bias)

    def _attention(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, d // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(dim=0)
        attn = torch.softmax(q @ k.transpose(-2, -1) / (d // self.num_heads) ** 0.5, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.attn_proj(out)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        sh_a, sc_a, g_a, sh_m, sc_m, g_m = self.modulation(c).chunk(6, dim=-1)
        x = x + g_a[:, None, :] * self._attention(modulate(self.norm1(x), sh_a, sc_a))
        x = x + g_m[:, None, :] * self.mlp(modulate(self.norm2(x), sh_m, sc_m))
        return x


class DiT(nn.Module):
    """Patchify, L modulated transformer blocks, modulated head, unpatchify.

    The modulation producers, residual gates, and the final projection
    are zero-initialized, so the forward pass is exactly zero at
    initialization for any input.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int = 2,
        input_hw: tuple[int, int] = (16, 16),
        patch_size: int = 4,
        hidden_dim: int = 128,
        depth: int = 8,
        num_heads: int = 8,
        mlp_ratio: float = 2.0,
        sinusoid_dim: int = 256,
    ):
        super().__init__()
        h, w = input_hw
        if h % patch_size or w % patch_size:
            raise ConfigError(f"patch size {patch_size} does not divide input {input_hw}")
        self.patch_size = patch_size
        self.input_hw = (h, w)
        self.out_channels = out_channels
        num_tokens = (h // patch_size) * (w // patch_size)

        self.patch_embed = nn.Conv2d(in_channels, hidden_dim, patch_size, stride=patch_size)
        self.pos_embed = nn.Parameter(torch.empty(1, num_tokens, hidden_dim).normal_(std=0.02))
        self.time_embed = TimestepEmbed(sinusoid_dim, hidden_dim)
        self.blocks = nn.ModuleList(
            [DiTBlock(hidden_dim, num_heads, mlp_ratio) for _ in range(depth)]
        )
        self.final_norm = nn.LayerNorm(hidden_dim, elementwise_affine=False)
        self.final_modulation = nn.Sequential(nn.SiLU(), nn.Linear(hidden_dim, 2 * hidden_dim))
        self.head = nn.Linear(hidden_dim, out_channels * patch_size * patch_size)
        nn.init.zeros_(self.final_modulation[1].weight)
        nn.init.zeros_(self.final_modulation[1].bias)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
        if x.dim() != 4:
            raise InputError(f"expected [B, C, H, W], got {tuple(x.shape)}")
        if tuple(x.shape[-2:]) != self.input_hw:
            raise InputError(
                f"input spatial dims {tuple(x.shape[-2:])} do not match the "
                f"configured grid {self.input_hw}"
            )
        if not torch.is_tensor(t):
            t = torch.tensor(t, device=x.device)
        c = self.time_embed(t.expand(x.shape[0]) if t.dim() == 0 else t)

        tokens = self.patch_embed(x).flatten(2).transpose(1, 2) + self.pos_embed
        for block in self.blocks:
            tokens = block(tokens, c)
        shift, scale = self.final_modulation(c).chunk(2, dim=-1)
        tokens = self.head(modulate(self.final_norm(tokens), shift, scale))
        return unpatch_tokens(tokens, self.patch_size, self.input_hw)
