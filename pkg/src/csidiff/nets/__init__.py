"""Temporal encoders, denoising backbones, baselines, and complexity accounting."""

from .baselines import (
    ConvLSTMForecaster,
    GRUForecaster,
    LinFormerEncoder,
    LinFormerForecaster,
    TimeMixBlock,
    TimeMixTrunk,
)
from .common import (
    SpatialSelfAttention,
    TemporalSelfAttention,
    TimestepEmbed,
    group_norm,
    sinusoidal_embedding,
)
from .complexity import count_params, estimate_flops
from .convlstm import ConvLSTMCell, ConvLSTMEncoder
from .dit import DiT, DiTBlock, patch_tokens, unpatch_tokens
from .specs import (
    BACKBONE_KINDS,
    ENCODER_KINDS,
    BackboneSpec,
    EncoderSpec,
    build_backbone,
    build_encoder,
)
from .unet2d import ResBlock2d, UNet2d
from .unet3d import ConvBlock3d, UNet3d

__all__ = [
    "BACKBONE_KINDS",
    "ENCODER_KINDS",
    "BackboneSpec",
    "ConvBlock3d",
    "ConvLSTMCell",
    "ConvLSTMEncoder",
    "ConvLSTMForecaster",
    "DiT",
    "DiTBlock",
    "EncoderSpec",
    "GRUForecaster",
    "LinFormerEncoder",
    "LinFormerForecaster",
    "ResBlock2d",
    "SpatialSelfAttention",
    "TemporalSelfAttention",
    "TimeMixBlock",
    "TimeMixTrunk",
    "TimestepEmbed",
    "UNet2d",
    "UNet3d",
    "build_backbone",
    "build_encoder",
    "count_params",
    "estimate_flops",
    "group_norm",
    "patch_tokens",
    "sinusoidal_embedding",
    "unpatch_tokens",
]
