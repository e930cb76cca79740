"""3D U-Net over stacked past+future frames with a mask channel.

Pooling and upsampling touch only the spatial axes; the frame axis is
preserved end to end, and the bottleneck attends along it.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ConfigError, InputError
from .common import TemporalSelfAttention, TimestepEmbed, group_norm


class ConvBlock3d(nn.Module):
    """Conv -> GroupNorm -> timestep add -> SiLU -> Conv -> GroupNorm -> SiLU."""

    def __init__(self, in_channels: int, out_channels: int, emb_dim: int):
        super().__init__()
        self.conv1 = nn.Conv3d(in_channels, out_channels, 3, padding=1)
        self.norm1 = group_norm(out_channels)
        self.emb_proj = nn.Linear(emb_dim, out_channels)
        self.conv2 = nn.Conv3d(out_channels, out_channels, 3, padding=1)
        self.norm2 = group_norm(out_channels)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.norm1(self.conv1(x))
        h = h + self.emb_proj(emb)[:, :, None, None, None]
        h = self.act(h)
        return self.act(self.norm2(self.conv2(h)))


class UNet3d(nn.Module):
    """Spatio-temporal denoiser; returns only the last ``n_future`` frames.

    The input stacks past and future frames on the temporal axis with a
    third channel holding the past/future mask (1 past, 0 future).
    Encoder: stem block to ``base_channels``, then three stages at 2x,
    4x, 8x width, each a conv block followed by spatial-only max-pool.
    Bottleneck: conv block plus self-attention along the frame axis.
    Decoder: three spatial-only transposed-conv upsamples, each fused
    with its skip and processed by a conv block; 1x1x1 conv head to the
    two output channels.
    """

    def __init__(
        self,
        in_channels: int = 3,
        out_channels: int = 2,
        n_future: int = 10,
        base_channels: int = 32,
        time_embed_dim: int = 256,
    ):
        super().__init__()
        if n_future < 1:
            raise ConfigError("n_future must be >= 1")
        self.n_future = n_future
        b = base_channels
        widths = [b, 2 * b, 4 * b, 8 * b]
        emb = time_embed_dim
        self.time_embed = TimestepEmbed(time_embed_dim, emb)

        self.stem = ConvBlock3d(in_channels, widths[0], emb)
        self.enc1 = ConvBlock3d(widths[0], widths[1], emb)
        self.enc2 = ConvBlock3d(widths[1], widths[2], emb)
        self.enc3 = ConvBlock3d(widths[2], widths[3], emb)
        self.pool = nn.MaxPool3d(kernel_size=(1, 2, 2), stride=(1, 2, 2))
        self.mid = ConvBlock3d(widths[3], widths[3], emb)
        self.mid_attn = TemporalSelfAttention(widths[3])
        self.up3 = nn.ConvTranspose3d(widths[3], widths[2], (1, 2, 2), stride=(1, 2, 2))
        self.dec3 = ConvBlock3d(widths[2] + widths[3], widths[2], emb)
        self.up2 = nn.ConvTranspose3d(widths[2], widths[1], (1, 2, 2), stride=(1, 2, 2))
        self.dec2 = ConvBlock3d(widths[1] + widths[2], widths[1], emb)
        self.up1 = nn.ConvTranspose3d(widths[1], widths[0], (1, 2, 2), stride=(1, 2, 2))
        self.dec1 = ConvBlock3d(widths[0] + widths[1], widths[0], emb)
        self.head = nn.Conv3d(widths[0], out_channels, 1)

    def forward(self, v: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
        if v.dim() != 5:
            raise InputError(f"expected [B, C, F, H, W], got {tuple(v.shape)}")
        if v.shape[-1] % 8 or v.shape[-2] % 8:
            raise ConfigError(
                f"spatial dims must be divisible by 8 for three halvings, got {tuple(v.shape[-2:])}"
            )
        if v.shape[2] < self.n_future:
            raise InputError(
                f"frame axis has {v.shape[2]} frames but n_future is {self.n_future}"
            )
        if not torch.is_tensor(t):
            t = torch.tensor(t, device=v.device)
        emb = self.time_embed(t.expand(v.shape[0]) if t.dim() == 0 else t)

        h0 = self.stem(v, emb)
        s1 = self.enc1(h0, emb)
        s2 = self.enc2(self.pool(s1), emb)
        s3 = self.enc3(self.pool(s2), emb)
        h = self.mid_attn(self.mid(self.pool(s3), emb))
        h = self.dec3(torch.cat([self.up3(h), s3], dim=1), emb)
        h = self.dec2(torch.cat([self.up2(h), s2], dim=1), emb)
        h = self.dec1(torch.cat([self.up1(h), s1], dim=1), emb)
        out = self.head(h)
        return out[:, :, -self.n_future:]
