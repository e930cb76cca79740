"""Declarative network specs and the builders that realize them.

Every parameter tensor's shape is a function of the spec dataclass
fields alone, so two builds from equal specs are checkpoint-compatible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import torch.nn as nn

from ..errors import ConfigError
from .baselines import LinFormerEncoder
from .convlstm import ConvLSTMEncoder
from .dit import DiT
from .unet2d import UNet2d
from .unet3d import UNet3d

ENCODER_KINDS = ("convlstm", "linformer", "gru", "none")
BACKBONE_KINDS = ("unet2d", "dit", "unet3d")


@dataclass(frozen=True)
class EncoderSpec:
    """Temporal encoder choice and widths; ``latent_channels`` sizes Z."""

    kind: str = "convlstm"
    hidden_channels: int = 128
    model_dim: int = 512
    ff_dim: int = 512
    num_layers: int = 2
    num_blocks: int = 6
    latent_channels: int = 32
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}, expected one of {ENCODER_KINDS}")
        for name in ("hidden_channels", "model_dim", "ff_dim", "num_layers", "num_blocks", "latent_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"EncoderSpec.{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class BackboneSpec:
    """Denoising backbone choice and widths."""

    kind: str = "unet2d"
    base_channels: int = 32
    channel_multipliers: Tuple[int, ...] = (1, 2)
    time_embed_dim: int = 256
    patch_size: int = 4
    hidden_dim: int = 128
    depth: int = 8
    num_heads: int = 8
    mlp_ratio: float = 2.0

    def __post_init__(self):
        if self.kind not in BACKBONE_KINDS:
            raise ConfigError(f"unknown backbone kind {self.kind!r}, expected one of {BACKBONE_KINDS}")
        for name in ("base_channels", "time_embed_dim", "patch_size", "hidden_dim", "depth", "num_heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"BackboneSpec.{name} must be >= 1")
        if len(self.channel_multipliers) < 2 or any(m < 1 for m in self.channel_multipliers):
            raise ConfigError("channel_multipliers needs at least two entries >= 1")
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.mlp_ratio <= 0:
            raise ConfigError("mlp_ratio must be positive")


def build_encoder(
    spec: EncoderSpec, *, n_tx: int, n_carriers: int, n_past: int
) -> Optional[nn.Module]:
    """Instantiate the conditioning encoder, or None for encoder-free models."""
    if spec.kind == "none":
        return None
    if spec.kind == "convlstm":
        return ConvLSTMEncoder(2, spec.hidden_channels, spec.latent_channels)
    if spec.kind == "linformer":
        return LinFormerEncoder(
            n_tx,
            n_carriers,
            n_past,
            spec.latent_channels,
            model_dim=spec.model_dim,
            ff_dim=spec.ff_dim,
            blocks=spec.num_blocks,
        )
    raise ConfigError(f"{spec.kind!r} is a direct forecaster, not a conditioning encoder")


def build_backbone(
    spec: BackboneSpec,
    *,
    in_channels: int,
    out_channels: int = 2,
    n_tx: int,
    n_carriers: int,
    n_future: int,
) -> nn.Module:
    """Instantiate the denoiser for a given conditioned input/output width."""
    if spec.kind == "unet2d":
        return UNet2d(
            in_channels,
            out_channels=out_channels,
            base_channels=spec.base_channels,
            channel_multipliers=spec.channel_multipliers[:2],
            time_embed_dim=spec.time_embed_dim,
        )
    if spec.kind == "dit":
        return DiT(
            in_channels,
            out_channels=out_channels,
            input_hw=(n_tx, n_carriers),
            patch_size=spec.patch_size,
            hidden_dim=spec.hidden_dim,
            depth=spec.depth,
            num_heads=spec.num_heads,
            mlp_ratio=spec.mlp_ratio,
            sinusoid_dim=spec.time_embed_dim,
        )
    if spec.kind == "unet3d":
        return UNet3d(
            in_channels,
            out_channels=out_channels,
            n_future=n_future,
            base_channels=spec.base_channels,
            time_embed_dim=spec.time_embed_dim,
        )
    raise ConfigError(f"unknown backbone kind {spec.kind!r}")
