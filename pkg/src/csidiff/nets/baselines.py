"""Direct forecasting baselines and the time-mixing transformer encoder.

The time-mix blocks replace attention with a learned linear mix across
the time-token axis applied per feature, keeping parameter count
quadratic in context length but avoiding softmax attention.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import InputError


class GRUForecaster(nn.Module):
    """Stacked GRU over flattened frames; one linear head emits all future frames."""

    def __init__(
        self,
        n_tx: int,
        n_carriers: int,
        n_future: int,
        hidden: int = 128,
        layers: int = 2,
    ):
        super().__init__()
        self.frame_dim = 2 * n_tx * n_carriers
        self.out_shape = (n_future, 2, n_tx, n_carriers)
        self.gru = nn.GRU(self.frame_dim, hidden, num_layers=layers, batch_first=True)
        self.head = nn.Linear(hidden, n_future * self.frame_dim)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.dim() != 5:
            raise InputError(f"expected [B, T, 2, H, W], got {tuple(seq.shape)}")
        b, t = seq.shape[:2]
        _, h_last = self.gru(seq.reshape(b, t, self.frame_dim))
        out = self.head(h_last[-1])
        return out.reshape(b, *self.out_shape)


class ConvLSTMForecaster(nn.Module):
    """Single-layer ConvLSTM rolled out frame by frame with a bounded head.

    Head: GroupNorm with one group, dropout, 3x3 projection to the two
    CSI channels, tanh.  Prediction recurses: each emitted frame is fed
    back as the next input.
    """

    def __init__(self, n_future: int, hidden: int = 128, dropout: float = 0.2):
        super().__init__()
        from .convlstm import ConvLSTMCell

        self.n_future = n_future
        self.cell = ConvLSTMCell(2, hidden)
        self.head = nn.Sequential(
            nn.GroupNorm(1, hidden),
            nn.Dropout(dropout),
            nn.Conv2d(hidden, 2, 3, padding=1),
            nn.Tanh(),
        )

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.dim() != 5:
            raise InputError(f"expected [B, T, 2, H, W], got {tuple(seq.shape)}")
        b, t, _, hgt, wid = seq.shape
        h, c = self.cell.zero_state(b, hgt, wid, seq)
        for step in range(t):
            h, c = self.cell(seq[:, step], h, c)
        frames = []
        x = self.head(h)
        frames.append(x)
        for _ in range(self.n_future - 1):
            h, c = self.cell(x, h, c)
            x = self.head(h)
            frames.append(x)
        return torch.stack(frames, dim=1)


class TimeMixBlock(nn.Module):
    """Pre-norm residual block: learned T x T time mix, then a feed-forward."""

    def __init__(self, n_tokens: int, model_dim: int, ff_dim: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(model_dim)
        self.time_mix = nn.Parameter(torch.empty(n_tokens, n_tokens))
        self.time_bias = nn.Parameter(torch.zeros(n_tokens))
        nn.init.uniform_(self.time_mix, -n_tokens**-0.5, n_tokens**-0.5)
        self.norm2 = nn.LayerNorm(model_dim)
        self.ff = nn.Sequential(
            nn.Linear(model_dim, ff_dim), nn.GELU(), nn.Linear(ff_dim, model_dim)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mixed = torch.einsum("st,btd->bsd", self.time_mix, self.norm1(x))
        x = x + mixed + self.time_bias[None, :, None]
        return x + self.ff(self.norm2(x))


class TimeMixTrunk(nn.Module):
    """Token projection plus a fixed-length stack of time-mix blocks."""

    def __init__(self, n_tokens: int, frame_dim: int, model_dim: int, ff_dim: int, blocks: int):
        super().__init__()
        self.n_tokens = n_tokens
        self.in_proj = nn.Linear(frame_dim, model_dim)
        self.blocks = nn.ModuleList(
            [TimeMixBlock(n_tokens, model_dim, ff_dim) for _ in range(blocks)]
        )

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.dim() != 5:
            raise InputError(f"expected [B, T, 2, H, W], got {tuple(seq.shape)}")
        b, t = seq.shape[:2]
        if t != self.n_tokens:
            raise InputError(
                f"this encoder is fixed to {self.n_tokens} context steps, got {t}"
            )
        x = self.in_proj(seq.reshape(b, t, -1))
        for block in self.blocks:
            x = block(x)
        return x


class LinFormerForecaster(nn.Module):
    """Time-mix trunk with a direct multi-frame head (no diffusion)."""

    def __init__(
        self,
        n_tx: int,
        n_carriers: int,
        n_past: int,
        n_future: int,
        model_dim: int = 512,
        ff_dim: int = 512,
        blocks: int = 6,
    ):
        super().__init__()
        frame_dim = 2 * n_tx * n_carriers
        self.out_shape = (n_future, 2, n_tx, n_carriers)
        self.trunk = TimeMixTrunk(n_past, frame_dim, model_dim, ff_dim, blocks)
        self.horizon_mix = nn.Linear(n_past, n_future)
        self.out_proj = nn.Linear(model_dim, frame_dim)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        x = self.trunk(seq)  # [B, T, D]
        x = self.horizon_mix(x.transpose(1, 2)).transpose(1, 2)  # [B, N_f, D]
        return self.out_proj(x).reshape(x.shape[0], *self.out_shape)


class LinFormerEncoder(nn.Module):
    """Time-mix trunk emitting a spatial latent map for diffusion conditioning."""

    def __init__(
        self,
        n_tx: int,
        n_carriers: int,
        n_past: int,
        latent_channels: int,
        model_dim: int = 512,
        ff_dim: int = 512,
        blocks: int = 6,
    ):
        super().__init__()
        self.hw = (n_tx, n_carriers)
        self.latent_channels = latent_channels
        self.trunk = TimeMixTrunk(n_past, 2 * n_tx * n_carriers, model_dim, ff_dim, blocks)
        self.site_proj = nn.Linear(model_dim, n_tx * n_carriers)
        self.latent_mix = nn.Linear(n_past, latent_channels)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        x = self.site_proj(self.trunk(seq))  # [B, T, H*W]
        z = self.latent_mix(x.transpose(1, 2)).transpose(1, 2)  # [B, latent, H*W]
        return z.reshape(z.shape[0], self.latent_channels, *self.hw)
