"""Two-stage 2D U-Net denoiser with one downsample and attention at half resolution."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ConfigError, InputError
from .common import SpatialSelfAttention, TimestepEmbed, group_norm


class ResBlock2d(nn.Module):
    """GroupNorm -> SiLU -> Conv, twice, with the timestep added after the first conv."""

    def __init__(self, in_channels: int, out_channels: int, emb_dim: int):
        super().__init__()
        self.norm1 = group_norm(in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_channels)
        self.norm2 = group_norm(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.act = nn.SiLU()
        self.skip = (
            nn.Conv2d(in_channels, out_channels, 1)
            if in_channels != out_channels
            else nn.Identity()
        )

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return self.skip(x) + h


class UNet2d(nn.Module):
    """Denoising backbone operating on channel-stacked conditioning.

    Stem to ``base_channels``, then one plain down block (two residual
    blocks and a learned 2x2 downsample) and one attention down block at
    twice the width without further downsampling; the bottleneck is
    residual-attention-residual at half resolution.  The decoder mirrors
    this: an attention up block of three residual+attention pairs fused
    with the second skip, then a plain up block of three residual blocks
    fused with the first skip, followed by the transposed-conv upsample
    back to full resolution.  Head: GroupNorm -> SiLU -> 3x3 conv, no
    final activation.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int = 2,
        base_channels: int = 32,
        channel_multipliers: tuple[int, int] = (1, 2),
        time_embed_dim: int = 256,
    ):
        super().__init__()
        if len(channel_multipliers) != 2:
            raise ConfigError(
                f"this backbone has exactly two stages, got multipliers {channel_multipliers}"
            )
        ch1 = base_channels * channel_multipliers[0]
        ch2 = base_channels * channel_multipliers[1]
        emb = time_embed_dim
        self.time_embed = TimestepEmbed(time_embed_dim, emb)

        self.stem = nn.Conv2d(in_channels, ch1, 3, padding=1)
        self.down1 = nn.ModuleList([ResBlock2d(ch1, ch1, emb), ResBlock2d(ch1, ch1, emb)])
        self.downsample = nn.Conv2d(ch1, ch1, 2, stride=2)
        self.down2 = nn.ModuleList([ResBlock2d(ch1, ch2, emb), ResBlock2d(ch2, ch2, emb)])
        self.down2_attn = nn.ModuleList([SpatialSelfAttention(ch2, 1) for _ in range(2)])
        self.mid1 = ResBlock2d(ch2, ch2, emb)
        self.mid_attn = SpatialSelfAttention(ch2, 1)
        self.mid2 = ResBlock2d(ch2, ch2, emb)
        self.up1 = nn.ModuleList(
            [ResBlock2d(2 * ch2, ch2, emb), ResBlock2d(ch2, ch2, emb), ResBlock2d(ch2, ch2, emb)]
        )
        self.up1_attn = nn.ModuleList([SpatialSelfAttention(ch2, 1) for _ in range(3)])
        self.up2 = nn.ModuleList(
            [ResBlock2d(ch2 + ch1, ch1, emb), ResBlock2d(ch1, ch1, emb), ResBlock2d(ch1, ch1, emb)]
        )
        self.upsample = nn.ConvTranspose2d(ch1, ch1, 2, stride=2)
        self.head = nn.Sequential(
            group_norm(ch1), nn.SiLU(), nn.Conv2d(ch1, out_channels, 3, padding=1)
        )

    def forward(self, x: torch.Tensor, t: torch.Tensor | int) -> torch.Tensor:
        if x.dim() != 4:
            raise InputError(f"expected [B, C, H, W], got {tuple(x.shape)}")
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise ConfigError(f"spatial dims must be divisible by 2, got {tuple(x.shape[-2:])}")
        if not torch.is_tensor(t):
            t = torch.tensor(t, device=x.device)
        emb = self.time_embed(t.expand(x.shape[0]) if t.dim() == 0 else t)

        h = self.stem(x)
        for block in self.down1:
            h = block(h, emb)
        h = self.downsample(h)
        skip1 = h
        for block, attn in zip(self.down2, self.down2_attn):
            h = attn(block(h, emb))
        skip2 = h
        h = self.mid2(self.mid_attn(self.mid1(h, emb)), emb)
        h = torch.cat([h, skip2], dim=1)
        for block, attn in zip(self.up1, self.up1_attn):
            h = attn(block(h, emb))
        h = torch.cat([h, skip1], dim=1)
        for block in self.up2:
            h = block(h, emb)
        h = self.upsample(h)
        return self.head(h)
